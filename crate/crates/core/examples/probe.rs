use mtled_core::config::*;
use mtled_core::solver::*;
use nalgebra::Vector3;

fn main() {
    // manual stepping loop with J monitoring
    let mut config = Benchmark::CylinderIndentation.config(1).unwrap();
    config.solver.safety = 0.1;
    config.solver.ramp_steps = 4000;
    config.solver.damping = Some(2000.0);
    let model = build_model(&config).unwrap();
    let dt = model.settings.dt.unwrap();
    println!("dt = {dt:.3e}, ramp = {} steps", config.solver.ramp_steps);
    let mass = lump_mass(&model.table, &model.materials).unwrap();
    let mut state = SimState::new(mass, dt, 2000.0);
    let mut forces = vec![Vector3::zeros(); model.cloud.len()];
    let chunk = default_chunk(model.table.entries.len());
    for step_i in 0..12000u64 {
        match step(&mut state, &model.table, &model.materials, &model.bcs, StepMode::DynamicRelaxation, &mut forces, chunk) {
            Ok(_) => {}
            Err(e) => { println!("step {step_i}: {e}"); break; }
        }
        if step_i % 400 == 0 || step_i > 3500 && step_i % 100 == 0 {
            let jmin = min_jacobian(&model.table, &state.u_curr);
            let umax = state.u_curr.iter().map(|u| u.norm()).fold(0.0f64, f64::max);
            println!("step {step_i}: J_min {jmin:.4} |u|max {umax:.4e} ke {:.2e}", state.kinetic_proxy());
            if jmin < 0.0 { break; }
        }
    }
}
