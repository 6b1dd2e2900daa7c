use mxscale::quantize::macro_sse;
use mxscale::tensorio::{load_quant, load_tensor, save_quant, save_tensor};
use mxscale::{
    ablation_sweep, dequantize_tensor, generate_tensor, matmul_quantized, matmul_reference, mean_qsnr,
    qsnr_matmul, quantize_tensor, scale_exponent_span, CandidateSet, Distribution, GeneratorSpec, MbsMode,
    Role, SchemeConfig, SweepConfig, TileConfig,
};

#[test]
fn files_to_product() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate_tensor(&GeneratorSpec::activation_like(24, 640, 1)).unwrap();
    let w = generate_tensor(&GeneratorSpec::weight_like(20, 640, 2)).unwrap();
    save_tensor(dir.path().join("a"), &a).unwrap();
    let a = load_tensor(dir.path().join("a")).unwrap();

    // hybrid: static activations, dynamic weights
    let aq = quantize_tensor(&a, &SchemeConfig::mbs_static(128)).unwrap();
    let wq = quantize_tensor(&w, &SchemeConfig::mbs_dynamic(128, MbsMode::Exact)).unwrap();
    save_quant(dir.path().join("w"), &wq).unwrap();
    let wq = load_quant(dir.path().join("w")).unwrap();

    let y = matmul_quantized(&aq, &wq, &TileConfig::new(16, 8, 64).unwrap()).unwrap();
    let oracle = matmul_reference(&dequantize_tensor(&aq).unwrap(), &dequantize_tensor(&wq).unwrap()).unwrap();
    assert_eq!(y, oracle);
    let r = qsnr_matmul(&a, &w, &aq, &wq).unwrap();
    assert!(r.qsnr_db > 10.0 && r.qsnr_db.is_finite());
}

#[test]
fn dynamic_sse_grows_with_macro_size_under_fixed_candidates() {
    // an optimum for a macro block is available to each of its halves
    let t = generate_tensor(&GeneratorSpec::activation_like(16, 1024, 3)).unwrap();
    let cands = CandidateSet::uniform16();
    let total = |ms: usize| -> f64 {
        let cfg = SchemeConfig::mbs_dynamic(ms, MbsMode::Exact).with_augment_static(false).with_candidates(cands.clone());
        let q = quantize_tensor(&t, &cfg).unwrap();
        let mut sse = 0.0;
        for r in 0..t.rows() {
            for (i, chunk) in t.row(r).chunks(ms).enumerate() {
                sse += macro_sse(chunk, 16, q.mantissa(r, i * ms));
            }
        }
        sse
    };
    let sizes = [32, 64, 128, 256, 512];
    let sse: Vec<f64> = sizes.iter().map(|&m| total(m)).collect();
    for w in sse.windows(2) {
        assert!(w[0] <= w[1], "{sse:?}");
    }
}

#[test]
fn sweep_rows_follow_macro_sse() {
    let cfg = SweepConfig {
        activation: GeneratorSpec::activation_like(8, 512, 4),
        weight: GeneratorSpec::weight_like(8, 512, 5),
        macro_sizes: vec![32, 512],
        schemes: vec![SchemeConfig::mbs_dynamic(128, MbsMode::Exact).with_augment_static(false)],
        n: 3,
    };
    let r = ablation_sweep(&cfg).unwrap();
    let a32 = r.find("mbs-d", 32, Role::Activation).unwrap().mean_qsnr_db;
    let a512 = r.find("mbs-d", 512, Role::Activation).unwrap().mean_qsnr_db;
    assert!(a32 >= a512);
    assert!(r.find("mbs-d", 32, Role::Output).unwrap().mean_flush_to_zero.is_none());
}

#[test]
fn outliers_cost_qsnr() {
    let cfg = SchemeConfig::mx16_oas();
    let clean = mean_qsnr(&GeneratorSpec::new(Distribution::Gaussian, 32, 512, 6), 4, &cfg).unwrap();
    let dirty = GeneratorSpec::new(Distribution::GaussianWithOutliers { rate: 0.01, magnitude: 1000.0 }, 32, 512, 6);
    let dirty = mean_qsnr(&dirty, 4, &cfg).unwrap();
    assert!(dirty.flush_to_zero_rate.unwrap() > clean.flush_to_zero_rate.unwrap());
    assert_eq!(clean.n_tensors, 4);
}

#[test]
fn scale_span_statistics() {
    let t = generate_tensor(&GeneratorSpec::activation_like(64, 1024, 7)).unwrap();
    let q = quantize_tensor(&t, &SchemeConfig::mx16_oas()).unwrap();
    let s = scale_exponent_span(&q).unwrap();
    assert!(s.max_exponent >= s.min_exponent);
    assert!((0.0..=1.0).contains(&s.frac_within_2_15));
    // student-t blocks stay within a few octaves of each other
    assert_eq!(s.frac_rows_fit_e4, 1.0);
    let nv = quantize_tensor(&t, &SchemeConfig::nvfp4()).unwrap();
    assert!(scale_exponent_span(&nv).is_err());
}
