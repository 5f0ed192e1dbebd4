use stratus_core::model::total_cost;
use stratus_core::pipeline::*;

fn main() {
    let t0 = std::time::Instant::now();
    let (universe, spec, base) = builtin_email_pipeline();
    println!("builtin_email_pipeline: {:?}", t0.elapsed());
    println!("base cost {}", total_cost(&base, &universe).unwrap());
    println!("base supported {}", supported_inbound(&universe, &spec, &base).unwrap());
    let t1 = std::time::Instant::now();
    let plans = builtin_scale_plans(&universe, &spec, &base).unwrap();
    println!("scale plans: {:?}", t1.elapsed());
    for p in &plans {
        let scaled = apply_scale_plan(&universe, &base, p).unwrap();
        println!(
            "{}: +{} msg/s, +{} instances, nodes {:?}, supported {}, cost {}",
            p.name,
            p.delta_capacity,
            p.delta.added_instances(),
            p.delta.nodes.iter().map(|n| n.node_type.as_str()).collect::<Vec<_>>(),
            supported_inbound(&universe, &spec, &scaled).unwrap(),
            total_cost(&scaled, &universe).unwrap()
        );
    }
}
