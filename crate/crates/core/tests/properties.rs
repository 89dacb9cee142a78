use proptest::prelude::*;

use lensforge::imaging::{inverse_square_weights, patch_psf, PatchLayout, Plane, PsfGrid};
use lensforge::lens::{DesignForm, Glass, ParamSchema, ParameterRanges, LAMBDA_C, LAMBDA_D, LAMBDA_F};
use lensforge::raytrace::ray::{refract, Ray};
use lensforge::Vec3;

fn unit(theta: f64, phi: f64) -> Vec3<f64> {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

proptest! {
    #[test]
    fn refraction_is_unit_and_reversible(
        theta in 0.0f64..1.2,
        phi in 0.0f64..std::f64::consts::TAU,
        tilt in 0.0f64..0.4,
        n1 in 1.0f64..1.9,
        n2 in 1.0f64..1.9,
    ) {
        let normal = unit(tilt, 0.7);
        let ray = Ray::new(Vec3::new(0.0, 0.0, 0.0), unit(theta, phi), LAMBDA_D);
        let out = refract(&ray, normal, n1, n2);
        prop_assume!(out.valid);
        prop_assert!((out.direction.norm() - 1.0).abs() < 1e-12);
        let back = refract(&Ray::new(out.origin, -out.direction, LAMBDA_D), normal, n2, n1);
        prop_assert!(back.valid);
        let d = -back.direction - ray.direction;
        prop_assert!(d.norm() < 1e-10, "{:?}", d);
    }

    #[test]
    fn dispersion_reproduces_glass_and_falls_with_wavelength(n_d in 1.45f64..1.95, v_d in 18.0f64..95.0) {
        let g = Glass::new(n_d, v_d);
        let nf = g.refractive_index(LAMBDA_F).unwrap();
        let nd = g.refractive_index(LAMBDA_D).unwrap();
        let nc = g.refractive_index(LAMBDA_C).unwrap();
        prop_assert!(((nd - n_d) / n_d).abs() < 1e-12);
        prop_assert!((((nd - 1.0) / (nf - nc)) - v_d).abs() / v_d < 1e-12);
        prop_assert!(nf > nd && nd > nc);
    }

    #[test]
    fn normalize_inverts_denormalize(values in proptest::collection::vec(0.0f64..=1.0, 19)) {
        let schema = ParamSchema::new(DesignForm::parse("GAGASAGA").unwrap(), &ParameterRanges::default(), 16.0);
        let lens = schema.denormalize(&values).unwrap();
        let (back, flagged) = schema.normalize(&lens).unwrap();
        prop_assert!(flagged.is_empty());
        for (a, b) in back.iter().zip(&values) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn field_weights_sum_to_one(r in 0.0f64..30.0, mut radii in proptest::collection::vec(0.0f64..30.0, 1..6)) {
        radii.sort_by(f64::total_cmp);
        let w = inverse_square_weights(r, &radii);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn patches_partition_the_image(cols in 1usize..6, rows in 1usize..6, size in 1usize..9) {
        let layout = PatchLayout::new(cols * size, rows * size, size, [0.01, 0.01], &[0.0, 1.0]).unwrap();
        let mut hits = vec![0u8; cols * rows * size * size];
        for p in &layout.patches {
            prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for y in 0..size {
                for x in 0..size {
                    hits[(p.row * size + y) * cols * size + p.col * size + x] += 1;
                }
            }
        }
        prop_assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn rotated_patch_psfs_keep_unit_sum(
        angle in -std::f64::consts::PI..std::f64::consts::PI,
        w0 in 0.0f64..1.0,
        sx in 0.6f64..3.0,
        sy in 0.6f64..3.0,
    ) {
        let t = 15;
        let c = (t / 2) as f64;
        let blob = |sx: f64, sy: f64| {
            let mut p = Plane::from_fn(t, t, |y, x| (-(x as f64 - c).powi(2) / (2.0 * sx * sx) - (y as f64 - c).powi(2) / (2.0 * sy * sy)).exp());
            let s: f64 = p.data.iter().sum();
            p.data.iter_mut().for_each(|v| *v /= s);
            p
        };
        let mut grid = PsfGrid::delta(t, &[0.0, 1.0]);
        grid.psfs[0] = [blob(sx, sy), blob(sy, sx), blob(sx, sx)];
        grid.psfs[1] = [blob(sy, sy), blob(sx, sy), blob(sy, sx)];
        for maps in patch_psf(&grid, &[w0, 1.0 - w0], angle, [0.01, 0.01]) {
            prop_assert!((maps.data.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(maps.data.iter().all(|v| *v >= 0.0));
        }
    }
}
