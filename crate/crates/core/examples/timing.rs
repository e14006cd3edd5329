use torsor_count::enumerate::{count_exact, CountOptions};
use torsor_count::VarietySpec;
use std::time::Instant;
fn main() {
    for (name, bounds) in [("x1", vec![100_000u64, 1_000_000]), ("x2", vec![100_000, 1_000_000]), ("x3", vec![100_000, 1_000_000])] {
        let spec = VarietySpec::preset(name).unwrap();
        for b in bounds {
            let t = Instant::now();
            let n = count_exact(&spec, b, CountOptions::default()).unwrap();
            println!("{name} B={b}: raw={n} in {:.2}s", t.elapsed().as_secs_f64());
        }
    }
}
