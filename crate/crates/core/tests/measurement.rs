use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarm_fdir::blockvec::{BlockLayout, BlockVec};
use swarm_fdir::measurement::{NoiseConfig, NoiseDistribution, RangeModel};
use swarm_fdir::topology::SwarmGraph;

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = SwarmGraph::complete(5).unwrap();
    let layout = BlockLayout::uniform(5, 3).unwrap();
    let model = RangeModel::new(g, layout.clone(), 3).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let data: Vec<f64> = (0..15).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let p = BlockVec::from_flat(layout.clone(), data).unwrap();
        let j = model.jacobian(&p).unwrap().to_dense();
        for c in 0..15 {
            let mut plus = p.clone();
            plus.as_mut_slice()[c] += h;
            let mut minus = p.clone();
            minus.as_mut_slice()[c] -= h;
            let fp = model.phi(&plus).unwrap();
            let fm = model.phi(&minus).unwrap();
            for (l, row) in j.iter().enumerate() {
                let fd = (fp.as_slice()[l] - fm.as_slice()[l]) / (2.0 * h);
                worst = worst.max((fd - row[c]).abs() / row[c].abs().max(1.0));
            }
        }
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn state_padding_leaves_velocity_columns_zero() {
    let g = SwarmGraph::path(2).unwrap();
    let layout = BlockLayout::uniform(2, 4).unwrap();
    let model = RangeModel::new(g, layout.clone(), 2).unwrap();
    let p = BlockVec::from_flat(layout, vec![0.0, 0.0, 9.0, 9.0, 3.0, 4.0, -9.0, 1.0]).unwrap();
    assert_eq!(model.phi(&p).unwrap().as_slice(), &[5.0]);
    let row = &model.jacobian(&p).unwrap().to_dense()[0];
    let want = [-0.6, -0.8, 0.0, 0.0, 0.6, 0.8, 0.0, 0.0];
    for (a, b) in row.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn emulated_noise_respects_bound() {
    let g = SwarmGraph::complete(6).unwrap();
    let layout = BlockLayout::uniform(6, 2).unwrap();
    let model = RangeModel::new(g, layout.clone(), 2).unwrap();
    let p = BlockVec::from_flat(layout, (0..12).map(|k| (k * k) as f64 * 0.3).collect()).unwrap();
    let clean = model.phi(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for distribution in [NoiseDistribution::UniformBall, NoiseDistribution::PerEdgeUniform] {
        let noise = NoiseConfig {
            omega_max: 0.05,
            distribution,
            ..NoiseConfig::default()
        };
        for _ in 0..1000 {
            let y = model.emulate_ranges(&p, &noise, &mut rng).unwrap();
            assert!(y.sub(&clean).unwrap().norm2() <= 0.05 + 1e-12);
        }
    }
}
