use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::pca::PcBasis;
use crate::policy::PolicyNet;

/// Iterates the recurrent map under constant input. The returned
/// trajectory starts with `s0` and has `steps + 1` states.
pub fn unforced_rollout(
    net: &PolicyNet,
    x: &DVector<f64>,
    s0: &DVector<f64>,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    if steps == 0 {
        return Err(Error::Config(
            "unforced rollout needs at least one step".into(),
        ));
    }
    check_dim("state", net.dims.state_len(), s0.len())?;
    check_dim("LSTM input", net.dims.d_in(), x.len())?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(s0.clone());
    for _ in 0..steps {
        let next = net.recurrent_map(out.last().unwrap(), x);
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Half-width of the grid along each PC, in state units.
    pub extent: f64,
    pub resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            extent: 0.5,
            resolution: 21,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub pc1: f64,
    pub pc2: f64,
    pub dpc1: f64,
    pub dpc2: f64,
}

/// One-step displacement `F(s) - s` sampled on a PC1-PC2 grid centred on
/// the fixed point, projected back onto the plane. Grid points keep the
/// fixed point's coordinates along every other component.
pub fn local_gradient_field(
    net: &PolicyNet,
    x: &DVector<f64>,
    fp_state: &DVector<f64>,
    basis: &PcBasis,
    grid: GridSpec,
) -> Result<Vec<FieldSample>> {
    check_dim("fixed point", basis.dim(), fp_state.len())?;
    check_dim("fixed point", net.dims.state_len(), fp_state.len())?;
    if basis.dim() < 2 || grid.resolution == 0 {
        return Err(Error::Config(
            "gradient field needs two components and a non-empty grid".into(),
        ));
    }
    let c1 = basis.component(0);
    let c2 = basis.component(1);
    let centre = basis.project(fp_state, 2)?;
    let offsets: Vec<f64> = if grid.resolution == 1 {
        vec![0.0]
    } else {
        (0..grid.resolution)
            .map(|k| -grid.extent + 2.0 * grid.extent * k as f64 / (grid.resolution - 1) as f64)
            .collect()
    };
    let mut out = Vec::with_capacity(grid.resolution * grid.resolution);
    for &a in &offsets {
        for &b in &offsets {
            let s = fp_state + &c1 * a + &c2 * b;
            let d = net.recurrent_map(&s, x) - &s;
            out.push(FieldSample {
                pc1: centre[0] + a,
                pc2: centre[1] + b,
                dpc1: c1.dot(&d),
                dpc2: c2.dot(&d),
            });
        }
    }
    Ok(out)
}
