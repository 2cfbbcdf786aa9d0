//! Scratch: locate the conjugate symmetry break in the stationary forcing path.
use num_complex::Complex64 as C;
use nsc_core::grid::{Field3, Grid, Repr};
use nsc_core::propagator::SpectralState;
use nsc_core::solver::{initial_state, nonlinearity, InitialData, SimulationConfig};
use nsc_core::symbol::{generator, Params};

fn main() {
    let cfg = SimulationConfig {
        n: 16,
        period: 8.0 * std::f64::consts::PI,
        eps: 0.25,
        omega: 8.0,
        ic: InitialData::TaylorGreen { amplitude: 0.2 },
        ..SimulationConfig::default()
    };
    let grid = Grid::new(cfg.n, cfg.period).unwrap();
    let p = Params::new(0.5, 0.0, 8.0, 0.25, 2.0).unwrap();
    let star = initial_state(&cfg, &grid).unwrap();
    println!("star a defect {:.3e}", grid.conjugate_symmetry_defect(&star.a));
    let mut la = grid.zeros(Repr::Spectral);
    let mut lu = Field3::zeros(&grid, Repr::Spectral);
    grid.for_each_mode(|i, xi| {
        let w = generator(&p, xi).mul_vec(&[
            star.a.data[i],
            star.u.0[0].data[i],
            star.u.0[1].data[i],
            star.u.0[2].data[i],
        ]);
        la.data[i] = w[0];
        lu.0[0].data[i] = w[1];
        lu.0[1].data[i] = w[2];
        lu.0[2].data[i] = w[3];
    });
    println!("la defect {:.3e}", grid.conjugate_symmetry_defect(&la));
    // Find the worst mode pair by hand.
    let n = grid.n() as i64;
    let mut worst = (0.0f64, [0i64; 3]);
    for kx in 0..n {
        for ky in 0..n {
            for kz in 0..n {
                let i1 = grid.idx(kx as usize, ky as usize, kz as usize);
                let i2 = grid.idx(
                    ((n - kx) % n) as usize,
                    ((n - ky) % n) as usize,
                    ((n - kz) % n) as usize,
                );
                let d = (la.data[i1] - la.data[i2].conj()).norm();
                if d > worst.0 {
                    worst = (d, [kx, ky, kz]);
                }
            }
        }
    }
    println!("worst la pair at {:?}: defect {:.3e}", worst.1, worst.0);
    let [kx, ky, kz] = worst.1;
    let i1 = grid.idx(kx as usize, ky as usize, kz as usize);
    println!("la there = {:?}, star.a there = {:?}", la.data[i1], star.a.data[i1]);
    println!(
        "u there = {:?} {:?} {:?}",
        star.u.0[0].data[i1], star.u.0[1].data[i1], star.u.0[2].data[i1]
    );
    for c in 0..3 {
        println!("lu{c} defect {:.3e}", grid.conjugate_symmetry_defect(&lu.0[c]));
    }
    let (na, nu) = nonlinearity(&p, &star).unwrap();
    println!("na defect {:.3e}", grid.conjugate_symmetry_defect(&na));
    for c in 0..3 {
        println!("nu{c} defect {:.3e}", grid.conjugate_symmetry_defect(&nu.0[c]));
    }
    let _ = SpectralState::zeros(&grid, 0.0);
    let _ = C::new(0.0, 0.0);
}
