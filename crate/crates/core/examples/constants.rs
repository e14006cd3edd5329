use torsor_count::peyre::peyre_constant;
use torsor_count::VarietySpec;

fn main() {
    for name in ["x1", "x2", "x3"] {
        let spec = VarietySpec::preset(name).unwrap();
        let t = std::time::Instant::now();
        let b = peyre_constant(&spec, 2_000_000, 42, 2000).unwrap();
        println!(
            "{name}: c*={}/{} c_fin={:.6}(±{:.1e}) c_inf={:.4}(±{:.4}) c2={} product={:.4} [{:?}]",
            b.c_star.num, b.c_star.den, b.c_fin.value, b.c_fin.tail,
            b.c_infty.value, b.c_infty.stderr, b.c2, b.product, t.elapsed()
        );
    }
}
