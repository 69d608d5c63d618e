use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Dollars per million input tokens.
    pub input_price: f64,
    /// Dollars per million output tokens.
    pub output_price: f64,
    pub avg_input_tokens: f64,
    pub avg_output_tokens: f64,
}

impl CostModel {
    /// Teacher model pricing and measured average token counts.
    pub const O3: CostModel = CostModel {
        input_price: 2.00,
        output_price: 8.00,
        avg_input_tokens: 1670.8,
        avg_output_tokens: 2173.3,
    };

    /// Distilled student model.
    pub const DISTILLED: CostModel = CostModel {
        input_price: 0.035,
        output_price: 0.141,
        avg_input_tokens: 1330.0,
        avg_output_tokens: 284.7,
    };

    pub fn per_request(&self) -> f64 {
        (self.avg_input_tokens * self.input_price + self.avg_output_tokens * self.output_price) / 1e6
    }

    pub fn is_valid(&self) -> bool {
        [self.input_price, self.output_price, self.avg_input_tokens, self.avg_output_tokens]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Dollars for `n_requests` at the model's average token counts.
pub fn estimate_cost(n_requests: u64, model: &CostModel) -> f64 {
    n_requests as f64 * model.per_request()
}
