//! Fixed-seed property suites with machine-readable verdicts.

use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::matcore::{cond_number, mat_invsqrt, mat_sqrt, newton_schulz, svd, Floor};
use crate::matrix::Matrix;
use crate::ortho::{self, TreatmentConfig, NOG_RANK_TOL};
use crate::random::{self, SeededRng};
use crate::svdlayer::{self, GradStabilizer, RootMode, SvdLayer};
use crate::trainer::{self, num_json, HeadMode, ToyModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    Nog,
    OlrBounds,
    NewtonSchulz,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["gradcheck", "nog", "olr-bounds", "newton-schulz", "all"];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradcheck" => Ok(Suite::Gradcheck),
            "nog" => Ok(Suite::Nog),
            "olr-bounds" => Ok(Suite::OlrBounds),
            "newton-schulz" => Ok(Suite::NewtonSchulz),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!(
                "unknown suite `{other}` (expected one of {})",
                Suite::NAMES.join(", ")
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Suite::Gradcheck => "gradcheck",
            Suite::Nog => "nog",
            Suite::OlrBounds => "olr-bounds",
            Suite::NewtonSchulz => "newton-schulz",
            Suite::All => "all",
        };
        f.write_str(name)
    }
}

/// One measured quantity against its limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `value ≤ limit` when true, `value ≥ limit` otherwise.
    pub at_most: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            at_most: true,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            at_most: false,
        }
    }

    /// NaN never passes.
    pub fn passed(&self) -> bool {
        if self.at_most {
            self.value <= self.limit
        } else {
            self.value >= self.limit
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "value": num_json(self.value),
            "limit": num_json(self.limit),
            "relation": if self.at_most { "<=" } else { ">=" },
            "passed": self.passed(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "suite": self.suite,
            "seed": self.seed,
            "passed": self.passed(),
            "checks": self.checks.iter().map(Check::to_json).collect::<Vec<_>>(),
        })
    }
}

pub fn run(suite: Suite, seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(match suite {
        Suite::Gradcheck => vec![gradcheck_suite(seed)?],
        Suite::Nog => vec![nog_suite(seed)?],
        Suite::OlrBounds => vec![olr_bounds_suite(seed)?],
        Suite::NewtonSchulz => vec![newton_schulz_suite(seed)?],
        Suite::All => vec![
            gradcheck_suite(seed)?,
            nog_suite(seed)?,
            olr_bounds_suite(seed)?,
            newton_schulz_suite(seed)?,
        ],
    })
}

/// Suite-specific stream so suites stay independent of each other.
fn suite_rng(seed: u64, salt: u64) -> SeededRng {
    random::rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
}

fn fd_rel_err(analytic: &Matrix, numeric: &Matrix) -> f64 {
    trainer::rel_err(analytic, numeric)
}

/// Relative error of `svdlayer::backward` against central differences of
/// `⟨R, f(X)⟩` for one random well-conditioned `n × n` covariance.
pub fn svdlayer_fd_case(rng: &mut SeededRng, n: usize, mode: RootMode, h: f64) -> Result<f64> {
    // X = P^{1/2}·orthonormal rows scaled by √N, so that X Xᵀ/N = P exactly.
    let samples = 2 * n;
    let p = random::spd_with_condition(rng, n, 10.0, 1.0);
    let frame = random::stiefel_matrix(rng, samples, n).transpose();
    let x = mat_sqrt(&p)?.matmul(&frame).scale((samples as f64).sqrt());
    let r = random::gaussian_matrix(rng, n, n);
    let layer = SvdLayer::new(mode, GradStabilizer::default());
    let (_, cache) = layer.forward_features(&x, false)?;
    let analytic = svdlayer::backward(&r, &cache)?;
    let f = |x: &Matrix| -> Result<f64> { Ok(layer.forward_features(x, false)?.0.inner(&r)) };
    let mut numeric = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            probe[(i, j)] = x[(i, j)] + h;
            let plus = f(&probe)?;
            probe[(i, j)] = x[(i, j)] - h;
            let minus = f(&probe)?;
            probe[(i, j)] = x[(i, j)];
            numeric[(i, j)] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(fd_rel_err(&analytic, &numeric))
}

/// Small gradcheck setups: `(label, head, d_in, d, treatments)`.
fn gradcheck_models() -> Vec<(&'static str, HeadMode, usize, usize, TreatmentConfig)> {
    let base = TreatmentConfig::baseline(0.1);
    let with = |f: fn(&mut TreatmentConfig)| {
        let mut t = base;
        f(&mut t);
        t
    };
    vec![
        ("linear", HeadMode::Linear, 6, 4, base),
        ("whiten", HeadMode::Whiten, 6, 4, base),
        ("gcp", HeadMode::Gcp { positions: 8 }, 32, 3, base),
        ("whiten+ow", HeadMode::Whiten, 6, 4, with(|t| t.use_ow = true)),
        ("gcp+sn", HeadMode::Gcp { positions: 8 }, 32, 3, with(|t| t.use_sn = true)),
    ]
}

/// Limit for the linear head, whose gradient has no spectral layer.
pub const LINEAR_GRADCHECK_TOL: f64 = 1e-7;
pub const GRADCHECK_TOL: f64 = 1e-4;

/// End-to-end model gradchecks plus the layer-level finite-difference cases.
pub fn gradcheck_suite(seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut rng = suite_rng(seed, 1);
    for mode in [RootMode::Sqrt, RootMode::InvSqrt] {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            worst = worst.max(svdlayer_fd_case(&mut rng, 6, mode, 1e-5)?);
        }
        checks.push(Check::at_most(
            format!("svdlayer {mode:?} 6x6 max rel err (50 cases)"),
            worst,
            GRADCHECK_TOL,
        ));
    }
    for (label, head, d_in, d, treatments) in gradcheck_models() {
        let positions = match head {
            HeadMode::Gcp { positions } => positions,
            _ => 1,
        };
        let data = trainer::synth_maps(seed, 24, d_in / positions, positions, 3, 2.0)?;
        let mut rng = suite_rng(seed, 2);
        let model = ToyModel::new(&mut rng, d_in, d, 3, head, treatments.use_ow)?;
        let report = trainer::gradcheck(
            &model,
            &data.features,
            &data.labels,
            &treatments,
            GradStabilizer::default(),
            1e-6,
        )?;
        let limit = if label == "linear" {
            LINEAR_GRADCHECK_TOL
        } else {
            GRADCHECK_TOL
        };
        checks.push(Check::at_most(format!("model {label} max rel err"), report.max_rel_err(), limit));
    }
    Ok(SuiteReport {
        suite: Suite::Gradcheck.to_string(),
        seed,
        checks,
    })
}

pub const NOG_SIZES: [usize; 4] = [4, 8, 16, 64];

/// Worst-case measurements of `nog` over random full-rank inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NogStats {
    pub cases: usize,
    pub orthogonality: f64,
    pub kappa_excess: f64,
    /// `‖U_G U_Gᵀ − U_R U_Rᵀ‖_F` with `U_R = R V_G`.
    pub left_projector: f64,
    /// `‖V_G V_Gᵀ − V_R V_Rᵀ‖_F` with `V_R = Rᵀ U_G`.
    pub right_projector: f64,
    /// `‖R − G (GᵀG)^{-1/2}‖_F`.
    pub polar_gap: f64,
    /// Cases where some sampled orthogonal matrix was at least as close.
    pub nearness_losses: usize,
    pub candidates: usize,
}

/// `per_size` random Gaussian matrices at each size, each compared against
/// the same `candidates` Haar-random orthogonal matrices of its size.
pub fn nog_stats(seed: u64, sizes: &[usize], per_size: usize, candidates: usize) -> Result<NogStats> {
    let mut rng = suite_rng(seed, 3);
    let mut s = NogStats {
        candidates,
        ..NogStats::default()
    };
    for &n in sizes {
        let pool: Vec<Matrix> = (0..candidates).map(|_| random::orthogonal_matrix(&mut rng, n)).collect();
        for _ in 0..per_size {
            let g = random::gaussian_matrix(&mut rng, n, n);
            let r = ortho::nog(&g, NOG_RANK_TOL)?;
            let r = r.value;
            s.cases += 1;
            s.orthogonality = s.orthogonality.max(r.orthogonality_error());
            s.kappa_excess = s.kappa_excess.max(cond_number(&r)? - 1.0);

            let f = svd(&g, 0.0)?;
            let u_r = r.matmul(&f.right);
            let v_r = r.t_matmul(&f.left);
            let proj = |m: &Matrix| m.matmul_t(m);
            s.left_projector = s.left_projector.max((&proj(&f.left) - &proj(&u_r)).frobenius_norm());
            s.right_projector = s.right_projector.max((&proj(&f.right) - &proj(&v_r)).frobenius_norm());
            let polar = g.matmul(&mat_invsqrt(&g.t_matmul(&g), Floor::default())?);
            s.polar_gap = s.polar_gap.max((&r - &polar).frobenius_norm());

            // ‖G − Q‖² = ‖G‖² + n − 2⟨G, Q⟩, so nearness is the largest ⟨G, Q⟩.
            let best = r.inner(&g);
            if pool.iter().any(|q| q.inner(&g) >= best) {
                s.nearness_losses += 1;
            }
        }
    }
    Ok(s)
}

pub fn nog_suite(seed: u64) -> Result<SuiteReport> {
    let s = nog_stats(seed, &NOG_SIZES, 50, 1000)?;
    Ok(SuiteReport {
        suite: Suite::Nog.to_string(),
        seed,
        checks: vec![
            Check::at_most("max ||RR^T - I||_F", s.orthogonality, 1e-10),
            Check::at_most("max kappa(R) - 1", s.kappa_excess, 1e-9),
            Check::at_most("max left projector gap", s.left_projector, 1e-8),
            Check::at_most("max right projector gap", s.right_projector, 1e-8),
            // The oracle goes through GᵀG, so its own error grows like ε·κ(G)².
            Check::at_most("max ||R - G(G^T G)^{-1/2}||_F", s.polar_gap, 1e-6),
            Check::at_most(
                format!("cases beaten by one of {} random orthogonal matrices", s.candidates),
                s.nearness_losses as f64,
                0.0,
            ),
        ],
    })
}

pub const OLR_SIZES: [usize; 4] = [4, 8, 16, 64];

/// Bound violations of `η*` over Haar-random orthogonal pairs of one size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlrBoundStats {
    pub n: usize,
    pub pairs: usize,
    pub below_lower: usize,
    pub above_upper: usize,
    pub negative: usize,
    pub min_eta: f64,
    pub max_eta: f64,
}

pub fn olr_bound_stats(seed: u64, n: usize, pairs: usize) -> Result<OlrBoundStats> {
    let mut rng = suite_rng(seed, 4 + n as u64);
    let mut s = OlrBoundStats {
        n,
        pairs,
        below_lower: 0,
        above_upper: 0,
        negative: 0,
        min_eta: f64::INFINITY,
        max_eta: f64::NEG_INFINITY,
    };
    for _ in 0..pairs {
        let w = random::orthogonal_matrix(&mut rng, n);
        let g = random::orthogonal_matrix(&mut rng, n);
        let o = ortho::olr(&w, &g, 1.0)?;
        s.min_eta = s.min_eta.min(o.eta_star);
        s.max_eta = s.max_eta.max(o.eta_star);
        if o.eta_star < o.lower_bound {
            s.below_lower += 1;
        }
        if o.eta_star > o.upper_bound {
            s.above_upper += 1;
        }
        if o.eta_star < 0.0 {
            s.negative += 1;
        }
    }
    Ok(s)
}

pub fn olr_bounds_suite(seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut rng = suite_rng(seed, 5);
    let w = random::gaussian_matrix(&mut rng, 8, 8);
    let analytic = ortho::olr(&w, &w, 1.0)?.eta_star;
    checks.push(Check::at_most("|eta*(W, W) - 1/3|", (analytic - 1.0 / 3.0).abs(), 1e-12));
    for n in OLR_SIZES {
        let s = olr_bound_stats(seed, n, 1000)?;
        checks.push(Check::at_most(
            format!("N={n}: eta* outside [1/(N^2+2), N^2/(N^2+2)] ({} below, {} negative, min {:.3e})", s.below_lower, s.negative, s.min_eta),
            (s.below_lower + s.above_upper) as f64,
            0.0,
        ));
    }
    Ok(SuiteReport {
        suite: Suite::OlrBounds.to_string(),
        seed,
        checks,
    })
}

/// Iterations allowed for well-conditioned inputs.
pub const NS_ITERS: usize = 20;
pub const NS_TOL: f64 = 1e-6;

/// Relative errors of the Newton–Schulz square root and inverse square root
/// against the eigendecomposition.
pub fn newton_schulz_errors(a: &Matrix, iters: usize) -> Result<(f64, f64)> {
    let (y, z) = newton_schulz(a, iters)?;
    let sqrt = mat_sqrt(a)?;
    let inv = mat_invsqrt(a, Floor::Relative(0.0))?;
    Ok((y.rel_diff(&sqrt), z.rel_diff(&inv)))
}

pub fn newton_schulz_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = suite_rng(seed, 6);
    let mut checks = Vec::new();
    for &kappa in &[1.0, 1e2, 1e4] {
        let mut worst = 0.0f64;
        for n in [4, 8, 16] {
            for _ in 0..5 {
                let a = random::spd_with_condition(&mut rng, n, kappa, 1.0);
                let (e_sqrt, e_inv) = newton_schulz_errors(&a, NS_ITERS)?;
                worst = worst.max(e_sqrt).max(e_inv);
            }
        }
        checks.push(Check::at_most(
            format!("kappa={kappa:e}: max relative error after {NS_ITERS} iterations"),
            worst,
            NS_TOL,
        ));
    }
    // Documented degradation: at κ = 1e8 the same budget is far from converged.
    let a = random::spd_with_condition(&mut rng, 8, 1e8, 1.0);
    let (_, e_inv) = newton_schulz_errors(&a, NS_ITERS)?;
    checks.push(Check::at_least(
        format!("kappa=1e8: inverse-root error after {NS_ITERS} iterations (degraded)"),
        e_inv,
        NS_TOL,
    ));
    Ok(SuiteReport {
        suite: Suite::NewtonSchulz.to_string(),
        seed,
        checks,
    })
}
