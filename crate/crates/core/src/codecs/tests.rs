use super::*;
use crate::embed_store::{generate_synthetic, SyntheticSpec};
use proptest::prelude::*;

fn mat(rows: &[&[f32]]) -> Matrix<f32> {
    let d = rows[0].len();
    Matrix::new(
        (0..rows.len()).map(|i| format!("r{i}")).collect(),
        d,
        rows.iter().flat_map(|r| r.iter().copied()).collect(),
    )
    .unwrap()
}

fn gaussian(seed: u64, n: usize, dim: usize) -> Matrix<f32> {
    generate_synthetic(&SyntheticSpec { seed, dim, n_clusters: 4, cluster_spread: 0.3, count: n }).unwrap()
}

fn cfg(m: Method) -> CodecConfig {
    m.into()
}

#[test]
fn config_json_shape() {
    let c = cfg(Method::ScalarQuant { bits: 4, binning: Binning::Percentile }).with_pre_truncate(256);
    let v: serde_json::Value = serde_json::to_value(c).unwrap();
    assert_eq!(v["method"], "scalar_quant");
    assert_eq!(v["params"]["bits"], 4);
    assert_eq!(v["params"]["binning"], "percentile");
    assert_eq!(v["pre_truncate"], 256);
    assert_eq!(v["fit_scope"], "global");
    assert_eq!(v["seed"], 0);
    let back: CodecConfig = serde_json::from_value(v).unwrap();
    assert_eq!(back, c);

    let id: CodecConfig = serde_json::from_str(r#"{"method": "identity"}"#).unwrap();
    assert!(id.is_identity());
    let pq: CodecConfig = serde_json::from_str(
        r#"{"method": "pq", "params": {"n_subvectors": 8, "code_bits": 4}, "fit_scope": "per_batch", "seed": 3}"#,
    )
    .unwrap();
    assert_eq!(pq.method, Method::Pq { n_subvectors: 8, code_bits: 4 });
    assert_eq!(pq.fit_scope, FitScope::PerBatch);
    let fc: CodecConfig =
        serde_json::from_str(r#"{"method": "float_cast", "params": {"format": "fp8_e4m3"}}"#).unwrap();
    assert_eq!(fc.method, Method::FloatCast { format: FloatFormat::Fp8E4m3 });
}

#[test]
fn validation_errors() {
    let bad = [
        cfg(Method::ScalarQuant { bits: 3, binning: Binning::EqualDistance }),
        cfg(Method::Truncate { keep_dims: 0 }),
        cfg(Method::Pca { out_dims: 9 }),
        cfg(Method::Lsh { n_bits: 0 }),
        cfg(Method::Pq { n_subvectors: 3, code_bits: 4 }),
        cfg(Method::Pq { n_subvectors: 4, code_bits: 17 }),
        cfg(Method::Identity).with_pre_truncate(9),
        cfg(Method::Pca { out_dims: 2 }).with_query_mode(QueryMode::Asymmetric),
    ];
    for c in bad {
        assert!(c.validate(8).is_err(), "{c:?} should be rejected");
    }
    // Truncation applies first: 6 of 8 dims, pq with 3 subvectors is fine.
    cfg(Method::Pq { n_subvectors: 3, code_bits: 2 }).with_pre_truncate(6).validate(8).unwrap();
}

#[test]
fn binary_zero_example() {
    let m = mat(&[&[-1.0, 2.0, 0.0, -3.0]]);
    let c = fit(&cfg(Method::Binary { threshold: Threshold::Zero }), &m).unwrap();
    let e = encode(&c, &m).unwrap();
    let bits: Vec<u32> = bits::unpack(e.row(0), 1, 4).collect();
    assert_eq!(bits, vec![0, 1, 0, 0]);
    let d = decode(&c, &e).unwrap();
    assert_eq!(d.row(0), &[-1.0, 1.0, -1.0, -1.0]);
}

#[test]
fn binary_decode_of_bits() {
    let m = mat(&[&[-5.0, 5.0]]);
    let c = fit(&cfg(Method::Binary { threshold: Threshold::Zero }), &m).unwrap();
    let enc = EncodedMatrix {
        codec_id: c.codec_id,
        ids: vec!["x".into()],
        count: 1,
        dim_effective: 2,
        bits_per_vector: 2,
        codes: vec![0b10],
    };
    assert_eq!(decode(&c, &enc).unwrap().row(0), &[-1.0, 1.0]);
}

#[test]
fn median_threshold() {
    let m = mat(&[&[1.0, 10.0], &[2.0, 20.0], &[3.0, 30.0]]);
    let c = fit(&cfg(Method::Binary { threshold: Threshold::Median }), &m).unwrap();
    assert_eq!(c.params, CodecParams::Median { thresholds: vec![2.0, 20.0] });
    let d = reconstruct(&c, &m).unwrap();
    assert_eq!(d.row(0), &[-1.0, -1.0]);
    assert_eq!(d.row(1), &[-1.0, -1.0]);
    assert_eq!(d.row(2), &[1.0, 1.0]);
}

#[test]
fn constant_calibration_equal_distance() {
    let m = mat(&[&[0.5, -2.0], &[0.5, -2.0], &[0.5, -2.0]]);
    let c = fit(&cfg(Method::ScalarQuant { bits: 4, binning: Binning::EqualDistance }), &m).unwrap();
    let CodecParams::EqualDistance(ed) = &c.params else { panic!() };
    assert_eq!(ed.lo, ed.hi);
    let e = encode(&c, &m).unwrap();
    assert!(e.codes.iter().all(|&b| b == 0));
    let d = decode(&c, &e).unwrap();
    assert_eq!(d, m);
}

#[test]
fn fp16_of_one_is_exact() {
    let m = mat(&[&[1.0, -1.0]]);
    for format in FloatFormat::ALL {
        let c = fit(&cfg(Method::FloatCast { format }), &m).unwrap();
        assert_eq!(reconstruct(&c, &m).unwrap(), m);
    }
}

#[test]
fn identity_is_bit_exact() {
    let m = gaussian(5, 50, 7);
    let c = fit(&CodecConfig::identity(), &m).unwrap();
    let e = encode(&c, &m).unwrap();
    assert_eq!(e.bits_per_vector, 32 * 7);
    assert_eq!(e.codes.len(), 50 * 28);
    assert_eq!(decode(&c, &e).unwrap(), m);
}

#[test]
fn truncate_and_pca_shapes() {
    let m = gaussian(1, 40, 8);
    let t = fit(&cfg(Method::Truncate { keep_dims: 3 }), &m).unwrap();
    let d = reconstruct(&t, &m).unwrap();
    assert_eq!(d.dim(), 3);
    assert_eq!(d.row(5), &m.row(5)[..3]);
    let p = fit(&cfg(Method::Pca { out_dims: 2 }), &m).unwrap();
    let d = reconstruct(&p, &m).unwrap();
    assert_eq!(d.dim(), 2);
    let CodecParams::Pca(model) = &p.params else { panic!() };
    assert_eq!(d.row(0), model.project(m.row(0)).as_slice());
}

#[test]
fn pq_exact_when_codebook_covers_data() {
    // 4 distinct 2-d subvectors per subspace, repeated; k = 4 (2 bits).
    let base: [[f32; 4]; 4] = [[0.0, 1.0, 5.0, 5.0], [2.0, 2.0, -1.0, 0.0], [3.0, 0.5, 0.0, 0.0], [9.0, 9.0, 1.0, 1.0]];
    let rows: Vec<&[f32]> = (0..20).map(|i| &base[i % 4][..]).collect();
    let m = mat(&rows);
    let c = fit(&cfg(Method::Pq { n_subvectors: 2, code_bits: 2 }), &m).unwrap();
    let e = encode(&c, &m).unwrap();
    assert_eq!(e.bits_per_vector, 4);
    assert_eq!(decode(&c, &e).unwrap(), m);
    // Decoding index j of subspace s is exactly codebook[s][j].
    let CodecParams::Pq { codebooks, subdim } = &c.params else { panic!() };
    let code = bits::unpack(e.row(1), 2, 2).collect::<Vec<_>>();
    let rec = decode(&c, &e).unwrap();
    for s in 0..2 {
        let j = code[s] as usize;
        assert_eq!(&rec.row(1)[s * subdim..(s + 1) * subdim], &codebooks[s][j * subdim..(j + 1) * subdim]);
    }
}

#[test]
fn pq_rejects_small_calibration() {
    let m = gaussian(2, 10, 4);
    let err = fit(&cfg(Method::Pq { n_subvectors: 2, code_bits: 4 }), &m).unwrap_err();
    assert!(matches!(err, CodecError::PqCalibration { needed: 16, got: 10 }));
}

#[test]
fn decode_checks_codec_and_length() {
    let m = gaussian(3, 10, 4);
    let a = fit(&cfg(Method::ScalarQuant { bits: 4, binning: Binning::EqualDistance }), &m).unwrap();
    let b = fit(&cfg(Method::ScalarQuant { bits: 4, binning: Binning::Percentile }), &m).unwrap();
    let mut e = encode(&a, &m).unwrap();
    assert!(matches!(decode(&b, &e), Err(CodecError::CodecMismatch { .. })));
    e.codes.pop();
    assert!(matches!(decode(&a, &e), Err(CodecError::CorruptCodes { .. })));
    let wrong = gaussian(3, 10, 5);
    assert!(matches!(encode(&a, &wrong), Err(CodecError::DimMismatch { expected: 4, got: 5 })));
}

#[test]
fn encoded_dump_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("codes.cemb");
    let m = gaussian(4, 30, 6);
    let c = fit(&cfg(Method::ScalarQuant { bits: 2, binning: Binning::Percentile }), &m).unwrap();
    let e = encode(&c, &m).unwrap();
    write_encoded(&e, &p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(&bytes[..4], b"CEMB");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    assert_eq!(bytes.len(), 24 + 12 + 30 * 2);
    assert_eq!(read_encoded(&p).unwrap(), e);
    assert!(crate::embed_store::read_batches(&p, 10).is_err());
}

#[test]
fn fitting_is_deterministic() {
    let m = gaussian(8, 300, 8);
    for c in [
        cfg(Method::Lsh { n_bits: 16 }).with_seed(4),
        cfg(Method::Pq { n_subvectors: 4, code_bits: 3 }).with_seed(2),
        cfg(Method::Pca { out_dims: 3 }),
        cfg(Method::ScalarQuant { bits: 2, binning: Binning::Percentile }).with_pre_truncate(5),
    ] {
        let a = fit(&c, &m).unwrap();
        let b = fit(&c, &m).unwrap();
        assert_eq!(a, b);
        assert_eq!(encode(&a, &m).unwrap(), encode(&b, &m).unwrap());
    }
    let a = fit(&cfg(Method::Lsh { n_bits: 16 }).with_seed(1), &m).unwrap();
    let b = fit(&cfg(Method::Lsh { n_bits: 16 }).with_seed(2), &m).unwrap();
    assert_ne!(a.codec_id, b.codec_id);
}

#[test]
fn asymmetric_queries_keep_precision() {
    let m = gaussian(6, 300, 8);
    let c = cfg(Method::Pq { n_subvectors: 4, code_bits: 2 })
        .with_pre_truncate(4)
        .with_query_mode(QueryMode::Asymmetric);
    let f = fit(&c, &m).unwrap();
    let q = f.prepare_queries(&m).unwrap();
    assert_eq!(q, m.truncate_dims(4).unwrap());
    let sym = fit(&c.with_query_mode(QueryMode::Symmetric), &m).unwrap();
    assert_ne!(sym.prepare_queries(&m).unwrap(), q);
}

#[test]
fn monotone_fidelity_in_bit_width() {
    let m = gaussian(10, 2000, 16);
    for binning in [Binning::EqualDistance, Binning::Percentile] {
        let mse: Vec<f64> = [2u32, 4, 8]
            .iter()
            .map(|&bits| {
                let c = fit(&cfg(Method::ScalarQuant { bits, binning }), &m).unwrap();
                let r = reconstruct(&c, &m).unwrap();
                crate::scalar::dist_sq(r.values(), m.values()) / m.values().len() as f64
            })
            .collect();
        assert!(mse[0] > mse[1] && mse[1] > mse[2], "{binning:?}: {mse:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn roundtrip_total_and_finite(
        seed in 0u64..1000,
        n in 20usize..60,
        scale in 0.01f32..100.0,
        which in 0usize..9,
    ) {
        let base = gaussian(seed, n, 8);
        let vals: Vec<f32> = base.values().iter().map(|v| v * scale).collect();
        let m = Matrix::new(base.ids().to_vec(), 8, vals).unwrap();
        let method = [
            Method::Identity,
            Method::FloatCast { format: FloatFormat::Fp8E4m3 },
            Method::FloatCast { format: FloatFormat::Fp8E5m2 },
            Method::ScalarQuant { bits: 4, binning: Binning::Percentile },
            Method::ScalarQuant { bits: 2, binning: Binning::EqualDistance },
            Method::Binary { threshold: Threshold::Median },
            Method::Pca { out_dims: 5 },
            Method::Lsh { n_bits: 13 },
            Method::Pq { n_subvectors: 2, code_bits: 3 },
        ][which];
        let c = fit(&cfg(method), &m).unwrap();
        // Inputs outside the calibration range too.
        let probe_vals: Vec<f32> = m.values().iter().map(|v| v * 3.0 - 1.0).collect();
        let probe = Matrix::new(m.ids().to_vec(), 8, probe_vals).unwrap();
        let r = reconstruct(&c, &probe).unwrap();
        prop_assert!(r.values().iter().all(|v| v.is_finite()));
        prop_assert_eq!(r.dim(), c.output_dim());
        prop_assert_eq!(encode(&c, &probe).unwrap().codes.len(), n * c.bits_per_vector().div_ceil(8));
    }
}
