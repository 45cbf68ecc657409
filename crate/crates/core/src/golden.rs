//! Frozen reference values for derived quantities.
//!
//! Each entry records how it was produced: Richardson extrapolation over
//! three nested grids, a dense eigendecomposition, or a closed form. The
//! tolerance of an extrapolated entry is five times the gap between the
//! extrapolated value and the finest-grid value, so the production path at
//! that resolution lands inside it.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::weighted_inner_real;
use crate::grid::Grid;
use crate::oracle::dense_lowest;
use crate::profile::{solve_profile, WallProfile};
use crate::spectral::{assemble, lowest_eigs, OperatorKind};

/// Half-width shared by all stored quantities.
pub const GOLDEN_L: f64 = 30.0;

/// Refuse an update when an entry moves by more than this many tolerances.
pub const DRIFT_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDescriptor {
    /// `richardson`, `dense` or `closed_form`.
    pub method: String,
    /// Grid sizes used, coarse to fine.
    pub resolutions: Vec<usize>,
    /// Assumed leading error order for extrapolation.
    pub extrapolation_order: Option<u32>,
    /// Order observed from the three-grid differences.
    pub observed_order: Option<f64>,
    pub half_width: f64,
    /// Grid size at which production values are compared.
    pub compare_at: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenEntry {
    pub value: f64,
    pub tolerance: f64,
    pub oracle: OracleDescriptor,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldenStore {
    pub entries: BTreeMap<String, GoldenEntry>,
}

impl GoldenStore {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }
}

/// A stored quantity and how to evaluate it on one grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    /// `u1(0)`.
    Midpoint { gamma: f64 },
    /// Third eigenvalue of `(L-, K)`.
    LminusGap { gamma: f64 },
    /// `k`-th eigenvalue (1-based) of `(L+, K)`.
    LplusMode { gamma: f64, k: usize },
    /// `k`-th eigenvalue of `(L_R, K)`.
    LrMode { gamma: f64, r: f64, k: usize },
    /// `||U'||_H^2`.
    DerivativeNormSq { gamma: f64 },
    /// `||U_1||_H^2`.
    GaugeNormSq { gamma: f64 },
}

impl Quantity {
    pub fn name(&self) -> String {
        match *self {
            Quantity::Midpoint { gamma } => format!("profile.midpoint.gamma{gamma}"),
            Quantity::LminusGap { gamma } => format!("spectrum.lminus.gap.gamma{gamma}"),
            Quantity::LplusMode { gamma, k } => format!("spectrum.lplus.mode{k}.gamma{gamma}"),
            Quantity::LrMode { gamma, r, k } => format!("spectrum.lr.R{r}.mode{k}.gamma{gamma}"),
            Quantity::DerivativeNormSq { gamma } => format!("weighted.derivative_norm_sq.gamma{gamma}"),
            Quantity::GaugeNormSq { gamma } => format!("weighted.gauge_norm_sq.gamma{gamma}"),
        }
    }

    fn gamma(&self) -> f64 {
        match *self {
            Quantity::Midpoint { gamma }
            | Quantity::LminusGap { gamma }
            | Quantity::LplusMode { gamma, .. }
            | Quantity::LrMode { gamma, .. }
            | Quantity::DerivativeNormSq { gamma }
            | Quantity::GaugeNormSq { gamma } => gamma,
        }
    }

    /// Leading error order in `h`. The window mask of `L_R` costs a
    /// half cell at each edge.
    pub fn order(&self) -> u32 {
        match self {
            Quantity::LrMode { .. } => 1,
            _ => 2,
        }
    }

    /// Production value on an `n`-node grid of half-width [`GOLDEN_L`].
    pub fn evaluate(&self, n: usize) -> Result<f64> {
        let profile = solve_profile(self.gamma(), &Grid::new(GOLDEN_L, n)?, 1e-10)?;
        self.evaluate_on(&profile)
    }

    pub fn evaluate_on(&self, p: &WallProfile) -> Result<f64> {
        let eig = |kind: OperatorKind, m: usize| -> Result<f64> {
            let k = assemble(OperatorKind::K, p)?;
            Ok(lowest_eigs(&assemble(kind, p)?, &k, m)?.eigenvalues[m - 1])
        };
        match *self {
            Quantity::Midpoint { .. } => Ok(p.u1[p.grid.mid()]),
            Quantity::LminusGap { .. } => eig(OperatorKind::Lminus, 3),
            Quantity::LplusMode { k, .. } => eig(OperatorKind::Lplus, k),
            Quantity::LrMode { r, k, .. } => eig(OperatorKind::LR(r), k),
            Quantity::DerivativeNormSq { .. } => {
                let du = p.derivative();
                Ok(weighted_inner_real(&du, &du, p))
            }
            Quantity::GaugeNormSq { .. } => {
                let u1 = p.gauge_mode(0);
                Ok(weighted_inner_real(&u1, &u1, p))
            }
        }
    }
}

/// Quantities extrapolated from three nested grids.
pub fn extrapolated_suite() -> Vec<Quantity> {
    vec![
        Quantity::Midpoint { gamma: 2.0 },
        Quantity::Midpoint { gamma: 5.0 },
        Quantity::LminusGap { gamma: 2.0 },
        Quantity::LplusMode { gamma: 2.0, k: 2 },
        Quantity::LplusMode { gamma: 2.0, k: 3 },
        Quantity::LrMode { gamma: 2.0, r: 2.0, k: 1 },
        Quantity::DerivativeNormSq { gamma: 2.0 },
        Quantity::GaugeNormSq { gamma: 2.0 },
        Quantity::DerivativeNormSq { gamma: 3.0 },
        Quantity::GaugeNormSq { gamma: 3.0 },
    ]
}

/// The three nested sizes ending at `n_fine` (each halving `h`).
pub fn nested_sizes(n_fine: usize) -> Result<[usize; 3]> {
    if n_fine < 41 || (n_fine - 1) % 4 != 0 {
        return Err(Error::Invalid(format!("oracle size must be 1 mod 4 and at least 41 (got {n_fine})")));
    }
    let mid = (n_fine + 1) / 2;
    Ok([(mid + 1) / 2, mid, n_fine])
}

fn richardson(q: Quantity, n_fine: usize) -> Result<GoldenEntry> {
    let sizes = nested_sizes(n_fine)?;
    let vals = sizes.iter().map(|&n| q.evaluate(n)).collect::<Result<Vec<f64>>>()?;
    let (d1, d2) = (vals[1] - vals[0], vals[2] - vals[1]);
    let p = q.order();
    let value = vals[2] + d2 / ((1u64 << p) as f64 - 1.0);
    let observed = if d2 != 0.0 && d1 != 0.0 { Some((d1 / d2).abs().log2()) } else { None };
    Ok(GoldenEntry {
        value,
        tolerance: (DRIFT_FACTOR * (value - vals[2]).abs()).max(1e-12),
        oracle: OracleDescriptor {
            method: "richardson".into(),
            resolutions: sizes.to_vec(),
            extrapolation_order: Some(p),
            observed_order: observed,
            half_width: GOLDEN_L,
            compare_at: n_fine,
        },
    })
}

/// Recomputes every derived entry with `n_fine` as the finest grid.
pub fn compute_derived(n_fine: usize) -> Result<GoldenStore> {
    let suite = extrapolated_suite();
    let mut entries: BTreeMap<String, GoldenEntry> = suite
        .par_iter()
        .map(|q| Ok((q.name(), richardson(*q, n_fine)?)))
        .collect::<Result<_>>()?;

    // Dense oracle on the coarsest nested grid, compared on the same grid.
    let n_dense = nested_sizes(n_fine)?[0];
    let p = solve_profile(2.0, &Grid::new(GOLDEN_L, n_dense)?, 1e-10)?;
    let dense = dense_lowest(OperatorKind::Lminus, &p, 3)?[2];
    entries.insert(
        format!("{}.dense_n{n_dense}", Quantity::LminusGap { gamma: 2.0 }.name()),
        GoldenEntry {
            value: dense,
            tolerance: 1e-9,
            oracle: OracleDescriptor {
                method: "dense".into(),
                resolutions: vec![n_dense],
                extrapolation_order: None,
                observed_order: None,
                half_width: GOLDEN_L,
                compare_at: n_dense,
            },
        },
    );

    // Closed form at gamma = 3: u1 = (1 + tanh(x / sqrt 2)) / 2.
    let q = Quantity::Midpoint { gamma: 3.0 };
    entries.insert(
        q.name(),
        GoldenEntry {
            value: 0.5,
            tolerance: 1e-12,
            oracle: OracleDescriptor {
                method: "closed_form".into(),
                resolutions: vec![],
                extrapolation_order: None,
                observed_order: None,
                half_width: GOLDEN_L,
                compare_at: n_fine,
            },
        },
    );
    Ok(GoldenStore { entries })
}

/// Looks up the quantity behind a stored name.
pub fn quantity_for(name: &str) -> Option<Quantity> {
    let base = name.split(".dense_n").next()?;
    extrapolated_suite().into_iter().chain([Quantity::Midpoint { gamma: 3.0 }]).find(|q| q.name() == base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub name: String,
    pub old: Option<f64>,
    pub new: f64,
    pub tolerance: f64,
    /// `|new - old| / tolerance`, zero for new entries.
    pub relative: f64,
}

/// Merges freshly computed entries into `existing`, reporting the drift of
/// each. Fails when some entry moved by more than [`DRIFT_FACTOR`]
/// tolerances, unless `force` is set.
pub fn merge(existing: Option<&GoldenStore>, fresh: GoldenStore, force: bool) -> Result<(GoldenStore, Vec<Drift>)> {
    let mut drifts = Vec::new();
    for (name, e) in &fresh.entries {
        let old = existing.and_then(|s| s.entries.get(name));
        let tolerance = old.map_or(e.tolerance, |o| o.tolerance);
        let relative = old.map_or(0.0, |o| (e.value - o.value).abs() / tolerance);
        drifts.push(Drift { name: name.clone(), old: old.map(|o| o.value), new: e.value, tolerance, relative });
    }
    if !force {
        if let Some(d) = drifts.iter().find(|d| d.relative > DRIFT_FACTOR) {
            return Err(Error::GoldenDrift { name: d.name.clone(), relative: d.relative });
        }
    }
    Ok((fresh, drifts))
}
