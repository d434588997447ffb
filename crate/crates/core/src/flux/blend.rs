use crate::expr::{bump_derivs, ScalarField};
use crate::geom::{apply, d, grid_residual, wedge, Grid, KForm};

use super::{check_adapted, AdaptedForm, FluxError, FluxSystem, Tolerances};

/// A local adapted 1-form valid on the band `lo < ψ < hi`.
#[derive(Clone, Debug)]
pub struct BlendPiece {
    pub lo: f64,
    pub hi: f64,
    pub eta: KForm,
}

#[derive(Clone, Debug)]
pub struct BlendReport {
    pub eta: KForm,
    pub adapted: AdaptedForm,
    /// `dη_L ∧ ν` sup over each piece's band.
    pub piece_residuals: Vec<f64>,
}

const COVERAGE_SAMPLES: usize = 4097;

/// Glue local adapted forms with weights `b_L(ψ) / Σ b(ψ)` built from smooth
/// bumps of `ψ`. Weights are functions of `ψ`, so `dw ∧ ν = 0` exactly.
pub fn blend_adapted(fs: &FluxSystem, pieces: &[BlendPiece], grid: &Grid, tol: &Tolerances) -> Result<BlendReport, FluxError> {
    let psi = fs.psi.as_ref().ok_or(FluxError::MissingPsi)?;
    assert!(!pieces.is_empty(), "blend needs at least one piece");
    let chart = fs.chart_arc().clone();
    let lo = grid.inf(&chart, |p| Ok(psi.value(p)?))?.value;
    let hi = grid.sup(&chart, |p| Ok(psi.value(p)?))?.value;
    for k in 0..COVERAGE_SAMPLES {
        let s = lo + (hi - lo) * k as f64 / (COVERAGE_SAMPLES - 1) as f64;
        let total: f64 = pieces.iter().map(|pc| bump_derivs(s, pc.lo, pc.hi).0).sum();
        if total <= 0.0 {
            return Err(FluxError::CoverageGap(s));
        }
    }

    let ad_nu_form = |eta: &KForm| -> Result<KForm, FluxError> { Ok(wedge(&d(eta)?, &fs.nu)?) };
    let mut piece_residuals = Vec::with_capacity(pieces.len());
    for (i, pc) in pieces.iter().enumerate() {
        let eb = apply(&pc.eta, &fs.b)?;
        let resid = ad_nu_form(&pc.eta)?;
        let vals = grid.sweep(&chart, |p| {
            let s = psi.value(p)?;
            if s <= pc.lo || s >= pc.hi {
                return Ok(None);
            }
            let r = resid.eval(p)?.into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(Some((eb.value(p)?, r)))
        })?;
        let mut worst = 0.0f64;
        for (_, v) in vals {
            if let Some((etab, r)) = v {
                if etab <= 0.0 || r >= tol.axiom {
                    return Err(FluxError::PieceNotAdapted(i));
                }
                worst = worst.max(r);
            }
        }
        piece_residuals.push(worst);
    }

    let eta = if pieces.len() == 1 {
        pieces[0].eta.clone()
    } else {
        let bumps: Vec<ScalarField> = pieces.iter().map(|pc| psi.bump(pc.lo, pc.hi)).collect();
        let total = ScalarField::sum(bumps.clone());
        let mut acc = KForm::zero(1, chart.clone());
        for (pc, b) in pieces.iter().zip(&bumps) {
            acc = acc.add(&pc.eta.scale(&(b / &total)));
        }
        acc
    };
    let adapted = check_adapted(fs, &eta, grid, tol)?;
    debug_assert!(
        grid_residual(&ad_nu_form(&eta)?, grid)?.value <= piece_residuals.iter().cloned().fold(0.0, f64::max) + 1e-12
    );
    Ok(BlendReport { eta, adapted, piece_residuals })
}
