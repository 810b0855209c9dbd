use fractalsea_core::latent_field::{generate_field, FractalParams, LatentField, LatentVector};
use proptest::prelude::*;

/// Box–Muller over the counter hash, written out from the documented
/// construction rather than calling the crate.
mod oracle {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    fn hash(words: &[u64]) -> u64 {
        let mut h = 0x243F6A8885A308D3u64;
        for &w in words {
            h = mix(h ^ w.wrapping_add(0x9E3779B97F4A7C15));
        }
        h
    }

    pub fn gaussian(key: &[u64]) -> f64 {
        let mut k0 = key.to_vec();
        k0.push(0);
        let mut k1 = key.to_vec();
        k1.push(1);
        let u1 = ((hash(&k0) >> 11) + 1) as f64 / 9007199254740992.0;
        let u2 = (hash(&k1) >> 11) as f64 / 9007199254740992.0;
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

fn corners(values: [[f64; 2]; 4]) -> [LatentVector; 4] {
    values.map(|v| LatentVector(v.to_vec()))
}

#[test]
fn first_diamond_center_is_the_seeded_draw() {
    for seed in [0u64, 1, 42, 9_999_999] {
        let params = FractalParams::new(1, 1.0, seed, corners([[0.0; 2]; 4]));
        let field = generate_field(&params).unwrap();
        for d in 0..2 {
            let expected = oracle::gaussian(&[seed, 0, 1, 1, d as u64]);
            assert_eq!(field.vertex(1, 1)[d], expected, "seed {seed} dim {d}");
        }
    }
}

#[test]
fn quarter_vertex_uses_bilinear_weights() {
    let (a, b, c, d) = (0.8, -0.4, 2.5, 1.0);
    let params = FractalParams::new(2, 0.0, 3, [a, b, c, d].map(|v| LatentVector(vec![v])));
    let field = generate_field(&params).unwrap();
    let expected = (9.0 * a + 3.0 * b + 3.0 * c + d) / 16.0;
    assert!((field.vertex(1, 1)[0] - expected).abs() < 1e-15);
}

#[test]
fn csv_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("field.csv");
    let field = generate_field(&FractalParams::new(3, 0.4, 11, corners([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8]]))).unwrap();
    field.write_csv(&path).unwrap();
    let back = LatentField::read_csv(&path).unwrap();
    assert_eq!(back.values(), field.values());
    assert_eq!(back.resolution(), field.resolution());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_scale_is_bilinear_everywhere(
        c in prop::array::uniform4(-5.0f64..5.0),
        levels in 1u32..6,
        seed in any::<u64>(),
    ) {
        let field = generate_field(&FractalParams::new(levels, 0.0, seed, c.map(|v| LatentVector(vec![v])))).unwrap();
        let n = field.resolution();
        for y in 0..n {
            for x in 0..n {
                let (u, v) = (x as f64 / (n - 1) as f64, y as f64 / (n - 1) as f64);
                let expected = c[0] * (1.0 - u) * (1.0 - v) + c[1] * u * (1.0 - v) + c[2] * (1.0 - u) * v + c[3] * u * v;
                prop_assert!((field.vertex(x, y)[0] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corners_are_kept_and_generation_is_pure(
        c in prop::array::uniform4(prop::array::uniform2(-3.0f64..3.0)),
        scale in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let params = FractalParams::new(3, scale, seed, corners(c));
        let a = generate_field(&params).unwrap();
        let b = generate_field(&params).unwrap();
        prop_assert_eq!(a.values(), b.values());
        let n = a.resolution() - 1;
        for (k, (x, y)) in [(0, 0), (n, 0), (0, n), (n, n)].into_iter().enumerate() {
            prop_assert_eq!(a.vertex(x, y), &c[k][..]);
        }
        prop_assert!(a.values().iter().all(|v| v.is_finite()));
    }
}
