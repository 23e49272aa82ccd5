//! Small hand-checkable scenarios.

use crate::model::{Load, Scenario};

/// Two batteries over three 1-hour steps: `a` is power-limited
/// (1 kW, 3 kWh), `b` is energy-limited (3 kW, 1 kWh).
pub fn table_one() -> Scenario {
    Scenario::from_loads(
        vec![
            Load::new(0, 0.0, 1.0, vec![0.0; 3], vec![1.0, 2.0, 3.0]),
            Load::new(1, 0.0, 3.0, vec![0.0; 3], vec![1.0, 1.0, 1.0]),
        ],
        1.0,
    )
    .expect("fixture is valid")
}
