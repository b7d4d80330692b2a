use crate::error::{Error, Result};

/// Scalar protocol constants shared by the closed forms and the simulator.
///
/// All durations are in symbols (symbol duration normalized to one) and the
/// arrival rate is in users per symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    preamble_len: u32,
    payload_len: u32,
    pool_size: u32,
    feedback_total: f64,
    arrival_rate: f64,
    p_md: f64,
    p_fa: f64,
}

impl ProtocolParams {
    pub fn new(
        preamble_len: u32,
        payload_len: u32,
        pool_size: u32,
        feedback_total: f64,
        arrival_rate: f64,
        p_md: f64,
        p_fa: f64,
    ) -> Result<Self> {
        let p = Self {
            preamble_len,
            payload_len,
            pool_size,
            feedback_total,
            arrival_rate,
            p_md,
            p_fa,
        };
        p.validate()?;
        Ok(p)
    }

    /// Baseline setting used throughout the evaluation: `N = 31`, `M = 256`,
    /// `tau = 4`, `L = 10 N`, `P_MD = P_FA = 0.01`, at normalized load `lambda_t`.
    pub fn reference(lambda_t: f64) -> Result<Self> {
        Self::new(31, 256, 310, 4.0, 0.0, 0.01, 0.01)?.with_normalized_load(lambda_t)
    }

    fn validate(&self) -> Result<()> {
        if self.preamble_len < 1 {
            return Err(Error::param("preamble_len", "must be at least 1"));
        }
        if self.payload_len < 1 {
            return Err(Error::param("payload_len", "must be at least 1"));
        }
        if self.pool_size < 2 {
            return Err(Error::param("pool_size", "must be at least 2"));
        }
        if !(self.feedback_total >= 0.0 && self.feedback_total.is_finite()) {
            return Err(Error::param(
                "feedback_total",
                "must be finite and nonnegative",
            ));
        }
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::param(
                "arrival_rate",
                "must be finite and nonnegative",
            ));
        }
        for (field, v) in [("p_md", self.p_md), ("p_fa", self.p_fa)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(field, format!("{v} is not a probability")));
            }
        }
        if self.p_md + self.p_fa > 1.0 + 1e-12 {
            return Err(Error::param("p_fa", "p_md + p_fa must not exceed 1"));
        }
        Ok(())
    }

    pub fn with_arrival_rate(mut self, lambda: f64) -> Result<Self> {
        self.arrival_rate = lambda;
        self.validate()?;
        Ok(self)
    }

    /// Sets `lambda` so that `lambda * (N + M)` equals `lambda_t`.
    pub fn with_normalized_load(self, lambda_t: f64) -> Result<Self> {
        let t = self.transaction_time();
        self.with_arrival_rate(lambda_t / t)
    }

    pub fn with_pool_size(mut self, l: u32) -> Result<Self> {
        self.pool_size = l;
        self.validate()?;
        Ok(self)
    }

    pub fn with_payload_len(mut self, m: u32) -> Result<Self> {
        self.payload_len = m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_preamble_len(mut self, n: u32) -> Result<Self> {
        self.preamble_len = n;
        self.validate()?;
        Ok(self)
    }

    pub fn with_feedback_total(mut self, tau: f64) -> Result<Self> {
        self.feedback_total = tau;
        self.validate()?;
        Ok(self)
    }

    pub fn with_error_probs(mut self, p_md: f64, p_fa: f64) -> Result<Self> {
        self.p_md = p_md;
        self.p_fa = p_fa;
        self.validate()?;
        Ok(self)
    }

    /// `N`, preamble length in symbols (also the Stage-1 duration).
    pub fn preamble_len(&self) -> u32 {
        self.preamble_len
    }

    /// `M`, payload length in symbols (also the per-slot Stage-2 duration).
    pub fn payload_len(&self) -> u32 {
        self.payload_len
    }

    /// `L`, number of preambles in the pool.
    pub fn pool_size(&self) -> u32 {
        self.pool_size
    }

    /// `tau`, total feedback duration per CRA-2 session.
    pub fn feedback_total(&self) -> f64 {
        self.feedback_total
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival_rate
    }

    pub fn p_md(&self) -> f64 {
        self.p_md
    }

    pub fn p_fa(&self) -> f64 {
        self.p_fa
    }

    pub fn stage1_duration(&self) -> f64 {
        self.preamble_len as f64
    }

    pub fn slot_duration(&self) -> f64 {
        self.payload_len as f64
    }

    /// Fixed part of every CRA-2 session: Stage 1 plus both feedbacks.
    pub fn overhead(&self) -> f64 {
        self.stage1_duration() + self.feedback_total
    }

    /// `T = N + M`, the time one user needs for one preamble and one packet.
    pub fn transaction_time(&self) -> f64 {
        (self.preamble_len + self.payload_len) as f64
    }

    pub fn normalized_load(&self) -> f64 {
        self.arrival_rate * self.transaction_time()
    }

    /// Fixed CRA-1 (and multichannel ALOHA) session length: Stage 1, one
    /// feedback, and `N` spread payload durations.
    pub fn fixed_session_len(&self) -> f64 {
        self.stage1_duration()
            + 0.5 * self.feedback_total
            + self.preamble_len as f64 * self.slot_duration()
    }

    /// Length of a CRA-2 session that opens `detected` Stage-2 slots.
    pub fn cra2_session_len(&self, detected: u64) -> f64 {
        self.overhead() + self.slot_duration() * detected as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_durations() {
        let p = ProtocolParams::reference(1.0).unwrap();
        assert_eq!(p.transaction_time(), 287.0);
        assert!((p.arrival_rate() - 1.0 / 287.0).abs() < 1e-18);
        assert_eq!(p.overhead(), 35.0);
        assert_eq!(p.fixed_session_len(), 31.0 + 2.0 + 31.0 * 256.0);
        assert_eq!(p.cra2_session_len(3), 35.0 + 768.0);
        assert!((p.normalized_load() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_fields() {
        let err = |r: Result<ProtocolParams>| match r {
            Err(Error::InvalidParameter { field, .. }) => field,
            other => panic!("expected parameter error, got {other:?}"),
        };
        assert_eq!(
            err(ProtocolParams::new(0, 1, 2, 0.0, 0.0, 0.0, 0.0)),
            "preamble_len"
        );
        assert_eq!(
            err(ProtocolParams::new(1, 0, 2, 0.0, 0.0, 0.0, 0.0)),
            "payload_len"
        );
        assert_eq!(
            err(ProtocolParams::new(1, 1, 1, 0.0, 0.0, 0.0, 0.0)),
            "pool_size"
        );
        assert_eq!(
            err(ProtocolParams::new(1, 1, 2, -1.0, 0.0, 0.0, 0.0)),
            "feedback_total"
        );
        assert_eq!(
            err(ProtocolParams::new(1, 1, 2, 0.0, -0.1, 0.0, 0.0)),
            "arrival_rate"
        );
        assert_eq!(
            err(ProtocolParams::new(1, 1, 2, 0.0, 0.0, 1.5, 0.0)),
            "p_md"
        );
        assert_eq!(
            err(ProtocolParams::new(1, 1, 2, 0.0, 0.0, 0.6, 0.6)),
            "p_fa"
        );
        assert!(ProtocolParams::new(1, 1, 2, 0.0, 0.0, 0.5, 0.5).is_ok());
    }
}
