use std::time::Instant;

use stencilpipe_bench::{stream_copy_on, update_bench, update_on, FootprintTarget};

#[test]
fn million_element_kernels_are_exact_and_fast() {
    let start = Instant::now();
    let mut a = vec![0.0; 1_000_000];
    let r = update_on(&mut a, 1, 7, FootprintTarget::Memory).unwrap();
    assert!(a.iter().all(|&v| v == 7.0));
    assert_eq!(r.checksum, 7.0e6);
    let src: Vec<f64> = (0..1_000_000).map(|i| (i as f64).sqrt()).collect();
    let mut dst = vec![0.0; src.len()];
    stream_copy_on(&src, &mut dst, 2, 3).unwrap();
    assert!(src
        .iter()
        .zip(&dst)
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn cache_bandwidth_not_below_memory_bandwidth() {
    let mem = update_bench(8_000_000, 1, 5, FootprintTarget::Memory).unwrap();
    let cache = update_bench(8_192, 1, 20_000, FootprintTarget::Cache).unwrap();
    println!(
        "memory {:.3e} B/s, cache {:.3e} B/s",
        mem.bandwidth, cache.bandwidth
    );
    assert!(cache.bandwidth >= mem.bandwidth);
}

#[test]
fn more_threads_do_not_lose_cache_bandwidth() {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 2 {
        eprintln!("skipped: single core host");
        return;
    }
    let one = update_bench(8_192 * cores, 1, 20_000, FootprintTarget::Cache).unwrap();
    let all = update_bench(8_192 * cores, cores, 20_000, FootprintTarget::Cache).unwrap();
    println!(
        "1 thread {:.3e} B/s, {cores} threads {:.3e} B/s",
        one.bandwidth, all.bandwidth
    );
    assert!(all.bandwidth >= one.bandwidth);
}
