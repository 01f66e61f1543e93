use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Ground, Point};
use crate::similarity::{MetricKind, SimTransform};

/// Outgoing edge quotas for each upper-layer (representative) node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GariCounts {
    pub similar: usize,
    pub random: usize,
    pub dissimilar: usize,
}

impl Default for GariCounts {
    fn default() -> Self {
        GariCounts { similar: 2, random: 1, dissimilar: 1 }
    }
}

impl GariCounts {
    pub fn total(&self) -> usize {
        self.similar + self.random + self.dissimilar
    }
}

/// Switches that remove one part of the search pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Start the lower-layer climb at a random trajectory instead of the
    /// upper-layer climb result.
    pub no_gari: bool,
    /// Build the lower layer with `delta = 1` (no random neighbors).
    pub no_random: bool,
    /// Answer from the final node's neighborhood only; disables the
    /// candidate floor.
    pub no_record: bool,
}

pub const DEFAULT_SCORER: &str = "exacts";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Point-correspondence threshold, in ground-distance units.
    pub alpha: f64,
    pub grid_m: usize,
    pub xi: usize,
    pub delta: f64,
    pub gari_counts: GariCounts,
    pub kappa_n: usize,
    pub kappa_r: usize,
    pub k: usize,
    pub metric: MetricKind,
    /// EDR match tolerance; `None` means `alpha`.
    pub edr_eps: Option<f64>,
    /// ERP gap point in raw coordinates (no centering is applied).
    pub erp_gap: (f64, f64),
    pub scorer: String,
    pub seed: u64,
    pub sim_transform: SimTransform,
    pub ground: Ground,
    /// Candidate floor for the breadth-first top-up; `None` means
    /// `max(4k, 50)`.
    pub min_candidates: Option<usize>,
    pub ablation: Ablation,
}

impl Config {
    /// Defaults for everything except `alpha`, which has no sensible unit-free
    /// default.
    pub fn new(alpha: f64) -> Self {
        Config {
            alpha,
            grid_m: 10,
            xi: 10,
            delta: 0.8,
            gari_counts: GariCounts::default(),
            kappa_n: 50,
            kappa_r: 50,
            k: 10,
            metric: MetricKind::Dtw,
            edr_eps: None,
            erp_gap: (0.0, 0.0),
            scorer: DEFAULT_SCORER.to_owned(),
            seed: 0,
            sim_transform: SimTransform::default(),
            ground: Ground::Planar,
            min_candidates: None,
            ablation: Ablation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.grid_m < 1 {
            return bad("grid_m must be >= 1".into());
        }
        if self.xi < 1 {
            return bad("xi must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad(format!("delta must lie in [0, 1], got {}", self.delta));
        }
        if self.k < 1 {
            return bad("k must be >= 1".into());
        }
        if self.kappa_n + self.kappa_r < self.xi {
            return bad(format!("kappa_n + kappa_r ({}) must be >= xi ({})", self.kappa_n + self.kappa_r, self.xi));
        }
        if let Some(eps) = self.edr_eps {
            if !(eps.is_finite() && eps > 0.0) {
                return bad(format!("edr_eps must be positive, got {eps}"));
            }
        }
        if !(self.erp_gap.0.is_finite() && self.erp_gap.1.is_finite()) {
            return bad("erp_gap must be finite".into());
        }
        Ok(())
    }

    pub fn effective_delta(&self) -> f64 {
        if self.ablation.no_random {
            1.0
        } else {
            self.delta
        }
    }

    pub fn edr_eps(&self) -> f64 {
        self.edr_eps.unwrap_or(self.alpha)
    }

    pub fn erp_gap_point(&self) -> Point {
        Point::new(self.erp_gap.0, self.erp_gap.1)
    }

    pub fn min_candidates(&self) -> usize {
        self.min_candidates.unwrap_or_else(|| (4 * self.k).max(50))
    }
}

/// `floor(x + 0.5)`, the rounding used for neighbor quotas.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Similar / random neighbor quotas for a lower-layer node with `xi`
/// neighbors. They always sum to `xi`.
pub fn cndi_quotas(xi: usize, delta: f64) -> (usize, usize) {
    let similar = round_half_up(delta * xi as f64).min(xi);
    (similar, xi - similar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::new(0.001).validate().unwrap();
        assert_eq!(Config::new(1.0).min_candidates(), 50);
        let mut c = Config::new(1.0);
        c.k = 20;
        assert_eq!(c.min_candidates(), 80);
    }

    #[test]
    fn rejects_bad_values() {
        for f in [
            |c: &mut Config| c.alpha = 0.0,
            |c: &mut Config| c.alpha = f64::NAN,
            |c: &mut Config| c.grid_m = 0,
            |c: &mut Config| c.xi = 0,
            |c: &mut Config| c.delta = 1.5,
            |c: &mut Config| c.k = 0,
            |c: &mut Config| {
                c.kappa_n = 2;
                c.kappa_r = 2;
            },
        ] {
            let mut c = Config::new(1.0);
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn quotas_round_half_up() {
        assert_eq!(cndi_quotas(10, 0.8), (8, 2));
        assert_eq!(cndi_quotas(10, 0.85), (9, 1));
        assert_eq!(cndi_quotas(5, 0.5), (3, 2));
        assert_eq!(cndi_quotas(4, 0.8), (3, 1));
        assert_eq!(cndi_quotas(3, 1.0), (3, 0));
        assert_eq!(cndi_quotas(7, 0.0), (0, 7));
        for xi in 1..40 {
            for d in 0..=20 {
                let (s, r) = cndi_quotas(xi, d as f64 / 20.0);
                assert_eq!(s + r, xi);
            }
        }
    }
}
