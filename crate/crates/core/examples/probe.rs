//! Scratch diagnostics for the axisymmetric engine. Not part of the crate.

use std::time::Instant;

use nsc_core::dispersion::{axisym_stats, halfwave_strichartz_norm, oscillatory_sup};
use nsc_core::symbol::Branch;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("unit");
    match which {
        "unit" => {
            // sup * clocked t for j in 0..=3, both signs.
            for j in 0..=3i32 {
                for br in [Branch::Plus, Branch::Minus] {
                    let mut line = format!("j={j} {br:?}: ");
                    for &t in &[5.0f64, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0] {
                        if j == 3 && br == Branch::Plus && t > 160.0 {
                            break;
                        }
                        let t0 = Instant::now();
                        let s = oscillatory_sup(j, br, t, 1.0).unwrap();
                        line += &format!(
                            "({t:.0}: {:.3} [{:.0}s]) ",
                            s * t / (8.0f64).powi(j),
                            t0.elapsed().as_secs_f64()
                        );
                    }
                    println!("{line}");
                }
            }
        }
        "low" => {
            // Clocked windows for j in -3..=-1, both signs; clock*t in [5, 40].
            for j in [-1i32, -2, -3] {
                let clock = (8.0f64).powi(j);
                for br in [Branch::Plus, Branch::Minus] {
                    let mut line = format!("j={j} {br:?}: ");
                    for m in 0..=3 {
                        let t = 5.0 / clock * (2.0f64).powi(m);
                        let t0 = Instant::now();
                        let s = oscillatory_sup(j, br, t, 1.0).unwrap();
                        line += &format!(
                            "(c{:.0}: {:.4} [{:.0}s]) ",
                            clock * t,
                            s * clock * t / clock,
                            t0.elapsed().as_secs_f64()
                        );
                    }
                    println!("{line}");
                }
            }
        }
        "lowlate" => {
            // Plus branch low blocks pushed to clocked time 80..320.
            for j in [-1i32, -2, -3] {
                let clock = (8.0f64).powi(j);
                let mut line = format!("j={j} Plus: ");
                for &c in &[80.0f64, 160.0, 320.0] {
                    let t = c / clock;
                    let t0 = Instant::now();
                    match oscillatory_sup(j, Branch::Plus, t, 1.0) {
                        Ok(s) => {
                            line += &format!("(c{c:.0}: {:.4} [{:.0}s]) ", s * t, t0.elapsed().as_secs_f64())
                        }
                        Err(e) => line += &format!("(c{c:.0}: ERR {e}) "),
                    }
                }
                println!("{line}");
            }
        }
        "homo" => {
            // tau=0 Fourier homogeneity: lq(b,0)/b^{9/4} is b-independent up to
            // quadrature error, so drift here means an engine bug, not physics.
            for jj in [1i32, 2, 3, 4] {
                let b = (2.0f64).powi(jj);
                let t0 = Instant::now();
                let st = axisym_stats(b, Branch::Plus, 0.0, Some(4.0), 1.0).unwrap();
                let lq = st.lq.unwrap();
                println!(
                    "b={b}: lq0={:.6e} lq0/b^2.25={:.6} sup0/b^3={:.6} [{:.0}s]",
                    lq,
                    lq / b.powf(2.25),
                    st.sup / b.powi(3),
                    t0.elapsed().as_secs_f64()
                );
            }
            // Full ladder norm: normalized/b^{9/4} shows where the factorized
            // high-band asymptote actually sets in.
            for jj in [1i32, 2, 3, 4] {
                let b = (2.0f64).powi(jj);
                let t0 = Instant::now();
                match halfwave_strichartz_norm(Branch::Plus, 1.0, 1.0, jj, 4.0, 4.0, 1.0) {
                    Ok(pt) => println!(
                        "b={b}: normalized={:.6} normalized/b^2.25={:.6} tail={:.3} [{:.0}s]",
                        pt.normalized,
                        pt.normalized / b.powf(2.25),
                        pt.tail_exponent,
                        t0.elapsed().as_secs_f64()
                    ),
                    Err(e) => println!("b={b}: ERR {e}"),
                }
            }
        }
        "late" => {
            // j = 0 plus pushed late.
            for &t in &[640.0f64, 1280.0] {
                let t0 = Instant::now();
                let s = oscillatory_sup(0, Branch::Plus, t, 1.0).unwrap();
                println!("t={t}: sup*t={:.4} [{:.0}s]", s * t, t0.elapsed().as_secs_f64());
            }
        }
        _ => eprintln!("unknown probe {which}"),
    }
}
