use variofit::studies::*;

fn main() {
    let cfg = BenchmarkConfig::default();
    let t0 = std::time::Instant::now();
    let rows = benchmark_scaling(&cfg).unwrap();
    for r in &rows {
        println!("{:6} {:4} {:?}", r.n, r.method, r.elapsed_seconds);
    }
    let gvm: Vec<f64> = rows.iter().filter(|r| r.method == "gvm").map(|r| r.elapsed_seconds.unwrap()).collect();
    for w in gvm.windows(2) {
        println!("gvm ratio {:.2}", w[1] / w[0]);
    }
    let ml: Vec<f64> = rows.iter().filter(|r| r.method == "ml").filter_map(|r| r.elapsed_seconds).collect();
    for w in ml.windows(2) {
        println!("ml ratio {:.2}", w[1] / w[0]);
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
