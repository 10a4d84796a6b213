use rand::seq::index::sample;
use rand::Rng as _;

use super::{ArchitectureKind, ArchitectureSpec, ConnectivityMask};
use crate::data::Grid;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const SYNAPTIC_STREAM: u64 = 1;

fn synaptic_rng(spec: &ArchitectureSpec) -> Rng {
    rng::stream(spec.mask_seed, SYNAPTIC_STREAM)
}

fn expect_kind(spec: &ArchitectureSpec, kind: ArchitectureKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Config(format!("{kind} mask requested for a {} spec", spec.kind)));
    }
    spec.validate()
}

/// Side length of the square receptive-field window holding `k` synapses.
pub fn window_side(k: usize) -> Result<usize> {
    let side = (k as f64).sqrt().round() as usize;
    if side * side != k {
        return Err(Error::Config(format!(
            "receptive fields need a square synapse count, got {k}"
        )));
    }
    Ok(side)
}

fn check_window_fits(grid: &Grid, side: usize) -> Result<()> {
    if grid.height < side || grid.width < side {
        return Err(Error::Config(format!(
            "a {side}×{side} window does not fit in a {}×{} grid",
            grid.height, grid.width
        )));
    }
    Ok(())
}

fn window_indices(grid: &Grid, channel: usize, top: usize, left: usize, side: usize) -> Vec<usize> {
    (top..top + side)
        .flat_map(|r| (left..left + side).map(move |c| grid.index(channel, r, c)))
        .collect()
}

fn draw_channel(grid: &Grid, rng: &mut Rng) -> usize {
    if grid.channels > 1 {
        rng.random_range(0..grid.channels)
    } else {
        0
    }
}

/// Each dendrite connects to `K` distinct inputs drawn uniformly without
/// replacement.
pub fn random_mask(spec: &ArchitectureSpec) -> Result<ConnectivityMask> {
    expect_kind(spec, ArchitectureKind::DannR)?;
    let n_in = spec.n_inputs();
    let (n_dendrites, _) = spec.hidden_sizes();
    let mut rng = synaptic_rng(spec);
    let rows: Vec<_> = (0..n_dendrites)
        .map(|_| sample(&mut rng, n_in, spec.synapses_per_dendrite).into_vec())
        .collect();
    ConnectivityMask::from_rows(n_dendrites, n_in, rows)
}

/// Each dendrite connects to one `side × side` window whose top-left corner
/// is uniform over all valid positions (and, for multichannel images, one
/// uniformly chosen channel).
pub fn lrf_mask(spec: &ArchitectureSpec) -> Result<ConnectivityMask> {
    expect_kind(spec, ArchitectureKind::DannLrf)?;
    let grid = spec.grid;
    let side = window_side(spec.synapses_per_dendrite)?;
    check_window_fits(&grid, side)?;
    let (n_dendrites, _) = spec.hidden_sizes();
    let mut rng = synaptic_rng(spec);
    let rows: Vec<_> = (0..n_dendrites)
        .map(|_| {
            let top = rng.random_range(0..=grid.height - side);
            let left = rng.random_range(0..=grid.width - side);
            let channel = draw_channel(&grid, &mut rng);
            window_indices(&grid, channel, top, left, side)
        })
        .collect();
    ConnectivityMask::from_rows(n_dendrites, grid.len(), rows)
}

/// Top-left corner of the window centred at `center` (which may lie
/// outside the grid), clamped so the window fits. For even sides the
/// centre is the lower-right of the middle four pixels.
pub fn grf_window_top_left(grid: &Grid, center: (i64, i64), side: usize) -> (usize, usize) {
    let half = (side / 2) as i64;
    let clamp = |v: i64, extent: usize| v.clamp(0, (extent - side) as i64) as usize;
    (clamp(center.0 - half, grid.height), clamp(center.1 - half, grid.width))
}

/// Each soma gets a uniformly drawn centre pixel; each of its dendrites
/// centres its window at an offset drawn uniformly from
/// `[-grf_spread, grf_spread]²` around it, clamped to the grid.
pub fn grf_mask(spec: &ArchitectureSpec) -> Result<ConnectivityMask> {
    expect_kind(spec, ArchitectureKind::DannGrf)?;
    let grid = spec.grid;
    let side = window_side(spec.synapses_per_dendrite)?;
    check_window_fits(&grid, side)?;
    let spread = spec.grf_spread as i64;
    let mut rng = synaptic_rng(spec);
    let mut rows = Vec::with_capacity(spec.n_somas * spec.dendrites_per_soma);
    for _ in 0..spec.n_somas {
        let center_r = rng.random_range(0..grid.height) as i64;
        let center_c = rng.random_range(0..grid.width) as i64;
        for _ in 0..spec.dendrites_per_soma {
            let dr = rng.random_range(-spread..=spread);
            let dc = rng.random_range(-spread..=spread);
            let channel = draw_channel(&grid, &mut rng);
            let (top, left) = grf_window_top_left(&grid, (center_r + dr, center_c + dc), side);
            rows.push(window_indices(&grid, channel, top, left, side));
        }
    }
    ConnectivityMask::from_rows(rows.len(), grid.len(), rows)
}

/// Soma × dendrite mask: soma `s` owns dendrites `[s·D, (s+1)·D)`.
pub fn cable_mask(n_somas: usize, dendrites_per_soma: usize) -> ConnectivityMask {
    let d = dendrites_per_soma;
    ConnectivityMask::from_rows(n_somas, n_somas * d, (0..n_somas).map(|s| s * d..(s + 1) * d))
        .expect("block structure is always in range")
}

/// One optional mask per weight layer (`None` = dense).
pub fn build_masks(spec: &ArchitectureSpec) -> Result<Vec<Option<ConnectivityMask>>> {
    spec.validate()?;
    let synaptic = match spec.kind {
        ArchitectureKind::DannR => random_mask(spec)?,
        ArchitectureKind::DannLrf => lrf_mask(spec)?,
        ArchitectureKind::DannGrf => grf_mask(spec)?,
        ArchitectureKind::Vann => return Ok(vec![None, None, None]),
    };
    Ok(vec![
        Some(synaptic),
        Some(cable_mask(spec.n_somas, spec.dendrites_per_soma)),
        None,
    ])
}

/// Trainable weights and biases; masked-out weights are not counted.
pub fn count_parameters(spec: &ArchitectureSpec) -> usize {
    let c = spec.n_classes;
    if spec.kind.is_dendritic() {
        let s = spec.n_somas;
        let d_tot = s * spec.dendrites_per_soma;
        d_tot * spec.synapses_per_dendrite + d_tot + d_tot + s + s * c + c
    } else {
        let (n, h1, h2) = (spec.n_inputs(), spec.hidden1, spec.hidden2);
        n * h1 + h1 + h1 * h2 + h2 + h2 * c + c
    }
}
