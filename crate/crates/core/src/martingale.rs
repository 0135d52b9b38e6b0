//! Conformal test martingales for online exchangeability monitoring.
//!
//! Wealth is kept as a logarithm so long alarming streams never overflow;
//! accessors report it on the linear scale.

use crate::calibrate::Calibration;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Number of Simpson intervals on the base ε grid (1001 points).
pub const MIXTURE_BASE_INTERVALS: usize = 1000;
/// Relative agreement required between a grid and its refinement.
pub const MIXTURE_REL_TOL: f64 = 1e-6;
const MIXTURE_MAX_INTERVALS: usize = 1 << 22;

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("p-value {p} outside (0, 1]")));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("betting exponent {epsilon} outside (0, 1]")));
    }
    Ok(())
}

fn log_power_factor(p: f64, epsilon: f64) -> f64 {
    epsilon.ln() + (epsilon - 1.0) * p.ln()
}

/// One ε-power bet: `wealth · ε · p^(ε-1)`.
pub fn power_step(wealth: f64, p: f64, epsilon: f64) -> Result<f64> {
    check_p(p)?;
    check_epsilon(epsilon)?;
    if !(wealth >= 0.0) {
        return Err(Error::invalid(format!("wealth {wealth} is negative")));
    }
    Ok(wealth * log_power_factor(p, epsilon).exp())
}

/// Composite Simpson estimates of `ln ∫₀¹ εⁿ e^{(ε-1)L} dε` on `intervals`
/// and on `intervals / 2` (the even points of the same grid).
fn log_simpson_pair(n: usize, log_p_sum: f64, intervals: usize) -> (f64, f64) {
    let h = 1.0 / intervals as f64;
    let nf = n as f64;
    let g: Vec<f64> = (0..=intervals)
        .map(|i| {
            if i == 0 {
                return if n == 0 { -log_p_sum } else { f64::NEG_INFINITY };
            }
            let e = i as f64 * h;
            nf * e.ln() + (e - 1.0) * log_p_sum
        })
        .collect();
    let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_with = |step: usize| {
        let last = intervals / step;
        let s: f64 = (0..=last)
            .map(|j| {
                let w = if j == 0 || j == last {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * (g[j * step] - top).exp()
            })
            .sum();
        top + (s * h * step as f64 / 3.0).ln()
    };
    (sum_with(1), sum_with(2))
}

/// Log of the mixture wealth after `n` steps whose log p-values sum to
/// `log_p_sum`. The integrand depends on the history only through these two.
pub fn log_mixture_wealth_from(n: usize, log_p_sum: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut intervals = 2 * MIXTURE_BASE_INTERVALS;
    loop {
        let (fine, coarse) = log_simpson_pair(n, log_p_sum, intervals);
        let rel = (coarse - fine).exp_m1().abs();
        if rel <= MIXTURE_REL_TOL || intervals >= MIXTURE_MAX_INTERVALS {
            if rel > MIXTURE_REL_TOL {
                log::warn!("mixture quadrature stopped at {intervals} intervals, relative change {rel:e}");
            }
            return fine;
        }
        intervals *= 2;
    }
}

/// `∫₀¹ ∏ᵢ ε·pᵢ^(ε-1) dε`; an empty history gives 1.
pub fn mixture_wealth(p_history: &[f64]) -> Result<f64> {
    let mut log_p_sum = 0.0;
    for &p in p_history {
        check_p(p)?;
        log_p_sum += p.ln();
    }
    Ok(log_mixture_wealth_from(p_history.len(), log_p_sum).exp())
}

/// How wealth is bet on each p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Betting {
    Power { epsilon: f64 },
    Mixture,
}

impl Betting {
    pub fn power(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Betting::Power { epsilon })
    }
}

/// Running wealth of one test martingale with a latched alarm.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleState {
    log_wealth: f64,
    log_p_sum: f64,
    history_len: usize,
    betting: Betting,
    threshold: f64,
    alerted: bool,
}

impl MartingaleState {
    pub fn new(betting: Betting, threshold: f64) -> Result<Self> {
        if let Betting::Power { epsilon } = betting {
            check_epsilon(epsilon)?;
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::invalid(format!("alarm threshold {threshold} must be positive")));
        }
        Ok(Self {
            log_wealth: 0.0,
            log_p_sum: 0.0,
            history_len: 0,
            betting,
            threshold,
            // S₀ = 1 already alarms when λ ≤ 1
            alerted: 1.0 >= threshold,
        })
    }

    pub fn wealth(&self) -> f64 {
        self.log_wealth.exp()
    }

    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn betting(&self) -> Betting {
        self.betting
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn alerted(&self) -> bool {
        self.alerted
    }

    /// Bets on `p` and returns the new wealth.
    pub fn update(&mut self, p: f64) -> Result<f64> {
        check_p(p)?;
        self.history_len += 1;
        self.log_p_sum += p.ln();
        self.log_wealth = match self.betting {
            Betting::Power { epsilon } => self.log_wealth + log_power_factor(p, epsilon),
            Betting::Mixture => log_mixture_wealth_from(self.history_len, self.log_p_sum),
        };
        if self.log_wealth >= self.threshold.ln() {
            self.alerted = true;
        }
        Ok(self.wealth())
    }
}

/// Whether monitored scores join the calibration set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CalibrationMode {
    #[default]
    Fixed,
    OnlineAppend,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorEvent {
    pub index: usize,
    pub p_value: f64,
    pub wealth: f64,
    pub alert: bool,
}

/// Streaming exchangeability monitor over nonconformity scores.
#[derive(Debug, Clone)]
pub struct Monitor {
    calibration: Calibration,
    state: MartingaleState,
    mode: CalibrationMode,
    rng: SeededRng,
    seen: usize,
}

impl Monitor {
    pub fn new(
        calibration: Calibration,
        state: MartingaleState,
        mode: CalibrationMode,
        rng: SeededRng,
    ) -> Result<Self> {
        if calibration.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self {
            calibration,
            state,
            mode,
            rng,
            seen: 0,
        })
    }

    pub fn state(&self) -> &MartingaleState {
        &self.state
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn observe(&mut self, score: f64) -> Result<MonitorEvent> {
        let p_value = self.calibration.smoothed_p_value(score, &mut self.rng)?;
        let was_alerted = self.state.alerted();
        let wealth = self.state.update(p_value)?;
        if self.mode == CalibrationMode::OnlineAppend {
            self.calibration = self.calibration.appended(score)?;
        }
        let index = self.seen;
        self.seen += 1;
        if self.state.alerted() && !was_alerted {
            log::warn!("nonexchangeability detected at event {index} (wealth {wealth:.4e}); retraining may be warranted");
        }
        Ok(MonitorEvent {
            index,
            p_value,
            wealth,
            alert: self.state.alerted(),
        })
    }
}

/// Runs a monitor over a whole score stream.
pub fn monitor(
    scores: impl IntoIterator<Item = f64>,
    calibration: Calibration,
    state: MartingaleState,
    mode: CalibrationMode,
    rng: SeededRng,
) -> Result<Vec<MonitorEvent>> {
    let mut m = Monitor::new(calibration, state, mode, rng)?;
    scores.into_iter().map(|s| m.observe(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn closed_form_single(p: f64) -> f64 {
        let l = p.ln();
        (p * l - p + 1.0) / (p * l * l)
    }

    #[test]
    fn power_step_examples() {
        for p in [0.01, 0.3, 1.0] {
            assert_eq!(power_step(2.0, p, 1.0).unwrap(), 2.0);
        }
        let one = power_step(1.0, 0.1, 0.5).unwrap();
        assert!((one - 0.5 / 0.1f64.sqrt()).abs() < 1e-12);
        assert!((one - 1.5811).abs() < 1e-4);
        let two = power_step(one, 0.1, 0.5).unwrap();
        assert!((two - 2.5).abs() < 1e-12);
        assert!(power_step(1.0, 0.0, 0.5).is_err());
        assert!(power_step(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn mixture_examples() {
        assert_eq!(mixture_wealth(&[]).unwrap(), 1.0);
        assert!((mixture_wealth(&[1.0]).unwrap() - 0.5).abs() < 1e-9);
        assert!((mixture_wealth(&[1.0 / E]).unwrap() - (E - 2.0)).abs() < 1e-6);
        for n in [1usize, 5, 50, 400] {
            let w = mixture_wealth(&vec![1.0; n]).unwrap();
            assert!((w / (1.0 / (n as f64 + 1.0)) - 1.0).abs() < 1e-6, "n={n}");
        }
        assert!(mixture_wealth(&[0.5, -0.1]).is_err());
    }

    #[test]
    fn mixture_single_step_closed_form() {
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let w = mixture_wealth(&[p]).unwrap();
            assert!((w - closed_form_single(p)).abs() < 1e-6, "p={p}");
        }
        let tiny = 1e-200;
        let w = mixture_wealth(&[tiny]).unwrap();
        assert!((w / closed_form_single(tiny) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn state_examples() {
        let s = MartingaleState::new(Betting::Mixture, 1.0).unwrap();
        assert!(s.alerted());
        assert_eq!(s.wealth(), 1.0);

        let mut s = MartingaleState::new(Betting::power(1.0).unwrap(), 2.0).unwrap();
        for i in 1..50 {
            s.update(i as f64 / 50.0).unwrap();
            assert_eq!(s.wealth(), 1.0);
        }
        assert!(!s.alerted());

        let mut s = MartingaleState::new(Betting::power(0.5).unwrap(), 1e6).unwrap();
        let mut last = s.wealth();
        for _ in 0..20 {
            let w = s.update(1e-3).unwrap();
            assert!(w > last);
            last = w;
        }
        assert!(s.alerted());
    }

    #[test]
    fn alert_latches() {
        let mut s = MartingaleState::new(Betting::power(0.5).unwrap(), 3.0).unwrap();
        s.update(0.01).unwrap();
        assert!(s.alerted());
        s.update(1.0).unwrap();
        s.update(1.0).unwrap();
        assert!(s.wealth() < 3.0);
        assert!(s.alerted());
    }

    #[test]
    fn monitor_requires_calibration() {
        let cal = Calibration::new(vec![1.0], 0.1).unwrap();
        let state = MartingaleState::new(Betting::Mixture, 20.0).unwrap();
        let ev = monitor([0.5, 2.0], cal, state, CalibrationMode::OnlineAppend, SeededRng::new(1)).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.p_value > 0.0 && e.p_value <= 1.0));
        // the second score beats both earlier scores
        assert!(ev[1].p_value < 1.0 / 3.0);
    }
}
