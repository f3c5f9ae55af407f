//! The retained-fraction schedule: starts at the whole corpus, halves
//! every H steps after warmup, and never drops below the floor.
//!
//! Usage: `cargo run --example schedule_demo`

use curricula::curriculum::Schedule;

fn main() -> curricula::Result<()> {
    // The decay whose retained fraction reaches its 20% floor at step 2000.
    let schedule = Schedule::reaching(0.2, 2000, 0, 5000)?;
    println!(
        "halving period H = {:.4} steps (floor 0.2 reached at step 2000)",
        schedule.halving
    );
    println!();
    println!("{:>6}  {:>8}  selected of 10,000 pairs", "step", "rho");
    for t in [0u64, 250, 500, 861, 1000, 1500, 1722, 1999, 2000, 2500, 5000] {
        let rho = schedule.rho(t);
        let n = ((rho * 10_000.0).ceil() as usize).clamp(1, 10_000);
        println!("{t:>6}  {rho:>8.5}  {n:>6}");
    }
    println!();

    // A warmup delays the decay; an explicit halving period sets it directly.
    let warm = Schedule::new(500.0, 0.1, 1000, 3000)?;
    println!("with warmup 1000 and H = 500:");
    for t in [0u64, 999, 1000, 1500, 2000, 2500, 3000] {
        println!("  rho({t}) = {:.5}", warm.rho(t));
    }
    Ok(())
}
