use phlab_core::par::{self, Exec};

#[test]
fn chunked_sum_is_schedule_independent() {
    let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
    let f = |c: &[f64], acc: &mut [f64]| c.iter().for_each(|x| acc[(x.abs() * 3.99) as usize] += x);
    assert_eq!(
        Exec::Seq.chunked_sum(&xs, 64, 4, f),
        Exec::Par.chunked_sum(&xs, 64, 4, f)
    );
}

#[test]
fn maps_keep_order() {
    assert_eq!(
        par::map_range(10, |i| i * i),
        (0..10).map(|i| i * i).collect::<Vec<_>>()
    );
    let xs = [3, 1, 2];
    assert_eq!(par::map(&xs, |x| x + 1), vec![4, 2, 3]);
    assert_eq!(Exec::Seq.map(&xs, |x| x * 2), Exec::Par.map(&xs, |x| x * 2));
}
