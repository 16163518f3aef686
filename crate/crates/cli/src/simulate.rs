use peridyn_kv::evolution::{run_with, RunOptions, TimeGrid, Trajectory};
use peridyn_kv::geometry::{DofMap, Point};
use peridyn_kv::linalg::CsrMatrix;
use peridyn_kv::local::{FemSystem, SimplexMesh};
use peridyn_kv::nonlocal::{DisplacementField, NonlocalModel};
use peridyn_kv::pair::{L2Gram, OperatorPair};

use crate::output::{num, Csv, Output};
use crate::{CliError, Resolved};

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "energy", "dissipation_integral", "dual_integral", "ede_residual", "l2_norm"];

pub fn trajectory_csv(traj_terms: &[peridyn_kv::evolution::EdeTerms], l2_norms: &[f64]) -> String {
    let mut csv = Csv::new(&TRAJECTORY_HEADER);
    for (t, l2) in traj_terms.iter().zip(l2_norms) {
        csv.row(&[
            num(t.time),
            num(t.energy),
            num(t.dissipation_integral),
            num(t.dual_integral),
            num(t.residual),
            num(*l2),
        ]);
    }
    csv.finish()
}

/// Nodes of the discretization with their coordinates.
struct Layout {
    dim: usize,
    coords: Vec<Point>,
    map: DofMap,
}

fn snapshot(layout: &Layout, dofs: &[f64]) -> String {
    let d = layout.dim;
    let axes = ["x", "y", "z"];
    let comps = ["u_x", "u_y", "u_z"];
    let mut header = vec!["node"];
    header.extend_from_slice(&axes[..d.min(3)]);
    header.extend_from_slice(&comps[..d.min(3)]);
    let mut csv = Csv::new(&header);
    let nodal = layout.map.extend(dofs);
    for (i, x) in layout.coords.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(x[..d].iter().map(|v| num(*v)));
        row.extend(nodal[i * d..(i + 1) * d].iter().map(|v| num(*v)));
        csv.row(&row);
    }
    csv.finish()
}

fn integrate(
    pair: &OperatorPair,
    u0: &[f64],
    time: &TimeGrid,
    layout: &Layout,
    every: usize,
    out: &Output,
) -> Result<Trajectory, CliError> {
    let steps = time.steps();
    let options = RunOptions {
        sample_every: usize::MAX,
        ..RunOptions::default()
    };
    let mut io_error = None;
    let result = run_with(pair, u0, time, &options, |k, _, state| {
        if k == 0 || k == steps || (every > 0 && k % every == 0) {
            if let Err(e) = out.write(&format!("field_{k}.csv"), &snapshot(layout, state)) {
                io_error = Some(e.to_string());
                return Err(peridyn_kv::Error::Invalid(format!("writing snapshot {k} failed")));
            }
        }
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(CliError::Io(e));
    }
    Ok(result?)
}

pub fn run(resolved: &Resolved, out: &Output) -> Result<(), CliError> {
    let cfg = &resolved.config;
    let time = cfg
        .time_grid()?
        .ok_or_else(|| CliError::Config("simulate needs time.t_final > 0".into()))?;
    let tol = cfg.simulate.residual_tolerance;
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::Config(format!(
            "simulate.residual_tolerance must be nonnegative, got {tol}"
        )));
    }
    let (pair, u0, layout) = match cfg.simulate.model.as_str() {
        "nonlocal" => {
            let model = NonlocalModel::new(cfg.kernel()?, cfg.grid()?, cfg.params()?, cfg.calibration()?)?;
            let field = cfg.field()?;
            field.check_trace()?;
            let grid = model.grid();
            let u0 = DisplacementField::constrained_from_fn(grid, |x| field.value(x)).dofs(grid);
            let layout = Layout {
                dim: grid.dim(),
                coords: (0..grid.node_count()).map(|i| grid.coord(i)).collect(),
                map: grid.dof_map().clone(),
            };
            (model.assemble()?, u0, layout)
        }
        "local" => {
            let d = cfg.dim()?;
            if cfg.simulate.cells < 2 {
                return Err(CliError::Config("simulate.cells must be at least 2".into()));
            }
            let mesh = SimplexMesh::structured(d, &cfg.domain.lower, &cfg.domain.upper, &vec![cfg.simulate.cells; d])?;
            let field = cfg.field()?;
            field.check_trace()?;
            let system = FemSystem::assemble(cfg.tensors()?, mesh)?;
            let u0 = system.dofs(&system.mesh().sample(|x| field.value(x)));
            let layout = Layout {
                dim: d,
                coords: system.mesh().nodes().to_vec(),
                map: system.dof_map().clone(),
            };
            (system.into_pair(), u0, layout)
        }
        "scalar" => {
            let (m, k) = (cfg.simulate.scalar_mass, cfg.simulate.scalar_stiffness);
            if !(m.is_finite() && m > 0.0 && k.is_finite() && k >= 0.0) {
                return Err(CliError::Config("scalar system needs mass > 0 and stiffness >= 0".into()));
            }
            let map = DofMap::from_mask(1, &[true]);
            let pair = OperatorPair::new(
                CsrMatrix::from_diagonal(&[m]),
                CsrMatrix::from_diagonal(&[k]),
                L2Gram::Lumped(vec![1.0]),
                map.clone(),
            )?;
            let layout = Layout {
                dim: 1,
                coords: vec![[0.0; 3]],
                map,
            };
            (pair, vec![cfg.initial.amplitude], layout)
        }
        other => {
            return Err(CliError::Config(format!(
                "simulate.model: unknown model '{other}' (nonlocal, local, scalar)"
            )))
        }
    };
    let traj = integrate(&pair, &u0, &time, &layout, cfg.simulate.snapshot_every, out)?;
    out.write("trajectory.csv", &trajectory_csv(&traj.terms, &traj.l2_norms))?;
    let e0 = traj.initial_energy();
    let rel = if e0 > 0.0 { traj.max_abs_residual() / e0 } else { traj.max_abs_residual() };
    if !(rel <= tol) {
        return Err(CliError::Failed(format!(
            "EDE residual {rel:e} exceeds the tolerance {tol:e}"
        )));
    }
    if !traj.energy_nonincreasing() {
        return Err(CliError::Failed("energy increased during the run".into()));
    }
    println!(
        "simulate: {} steps, E(0) = {}, E(T) = {}, relative EDE residual = {rel:e}",
        time.steps(),
        num(e0),
        num(traj.terms.last().map(|t| t.energy).unwrap_or(e0))
    );
    Ok(())
}
