use super::params::Params;
use crate::error::{CadError, Result};

/// ema ← decay·ema + (1−decay)·params, elementwise.
pub fn ema_update(ema: &mut Params, params: &Params, decay: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&decay) {
        return Err(CadError::contract(format!(
            "EMA decay must lie in [0,1], got {decay}"
        )));
    }
    assert_eq!(ema.len(), params.len(), "EMA parameter count mismatch");
    for i in 0..params.len() {
        assert_eq!(
            ema.tensor(i).shape(),
            params.tensor(i).shape(),
            "EMA shape mismatch for `{}`",
            params.name(i)
        );
        let src = params.tensor(i).data();
        for (e, &p) in ema.tensor_mut(i).data_mut().iter_mut().zip(src) {
            *e = decay * *e + (1.0 - decay) * p;
        }
    }
    Ok(())
}
