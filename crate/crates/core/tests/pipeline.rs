use dklsynth_core::abstraction::{AlignPolicy, Abstraction};
use dklsynth_core::dkl::{train_model, GpConfig, ModelConfig, ModelKind, NetConfig};
use dklsynth_core::dynamics::{builtin_labels, builtin_system, generate_dataset};
use dklsynth_core::nn::TrainConfig;
use dklsynth_core::refinement::{refine, RefinementConfig, ScoreSupport};
use dklsynth_core::synthesis::{synthesize, Dfa};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn learn_abstract_synthesize_refine() {
    let spec = builtin_system("nonlinear2d").unwrap();
    let labels = builtin_labels("nonlinear2d").unwrap();
    let ds = generate_dataset(&spec, 200, 60, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let cfg = ModelConfig {
        kind: ModelKind::parse("dkl-s").unwrap(),
        net: NetConfig { hidden: vec![16, 16], train: TrainConfig { epochs: 30, ..TrainConfig::default() } },
        gp: GpConfig { iters: 30, ..GpConfig::default() },
    };
    let model = train_model(&cfg, &ds, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let abs = Abstraction::build(&model, &spec, &labels, &[10, 10], AlignPolicy::Split).unwrap();
    abs.imdp.validate().unwrap();
    let dfa = Dfa::builtin("safe_reach_two").unwrap();
    let res = synthesize(&abs.imdp, &dfa, 0.95).unwrap();
    let n = abs.partition.num_cells();
    assert_eq!(res.lower.len(), n);
    for q in 0..n {
        assert!(0.0 <= res.lower[q] && res.lower[q] <= res.upper[q] + 1e-9 && res.upper[q] <= 1.0 + 1e-9);
    }

    let rc = RefinementConfig { n_ref: 10, rounds: 1, support: ScoreSupport::AllStored };
    let r = refine(&abs, &res, &model, &rc).unwrap();
    assert_eq!(r.splits.len(), 10);
    assert_eq!(r.abstraction.partition.num_cells(), n + 10);
    r.abstraction.imdp.validate().unwrap();
    let res2 = synthesize(&r.abstraction.imdp, &dfa, 0.95).unwrap();
    let mut vol = vec![0.0; n];
    for (i, &p) in r.lineage.iter().enumerate() {
        vol[p] += r.abstraction.partition.volume_fraction(i);
        assert!(0.0 <= res2.lower[i] && res2.lower[i] <= res2.upper[i] + 1e-9 && res2.upper[i] <= 1.0 + 1e-9);
    }
    for p in 0..n {
        assert!((vol[p] - abs.partition.volume_fraction(p)).abs() < 1e-12);
    }
}
