//! Small reference prescriptions used by examples, tests and the CLI.

use crate::lens::glass::{Glass, Material};
use crate::lens::system::{LensSystem, Surface};
use crate::lens::glass::LAMBDA_D;
use crate::raytrace::{focal_lengths, update_stop_aperture};

fn surface(radius: f64, thickness: f64, glass: Option<Glass<f64>>, stop: bool) -> Surface<f64> {
    Surface {
        curvature: if radius == 0.0 { 0.0 } else { 1.0 / radius },
        thickness_after: thickness,
        material_after: glass.map_or(Material::Air, Material::Glass),
        semi_diameter: f64::INFINITY,
        is_stop: stop,
    }
}

fn finish(mut lens: LensSystem<f64>, focus: bool) -> LensSystem<f64> {
    update_stop_aperture(&mut lens);
    if focus {
        if let Ok((_, bfl)) = focal_lengths(&lens, LAMBDA_D) {
            lens.image_distance = bfl;
        }
    }
    lens
}

/// Classic air-spaced triplet (SK16 / F2 / SK16) scaled to a 40 mm focal
/// length, f/5, form GAGASAGA.
pub fn cooke_triplet() -> LensSystem<f64> {
    let k = 0.8;
    let sk16 = || Some(Glass::named("SK16", 1.62041, 60.3));
    let f2 = || Some(Glass::named("F2", 1.62004, 36.37));
    let lens = LensSystem {
        surfaces: vec![
            surface(22.01359 * k, 3.25896 * k, sk16(), false),
            surface(-435.7604 * k, 6.00755 * k, None, false),
            surface(-22.21328 * k, 0.99997 * k, f2(), false),
            surface(20.29192 * k, 2.0 * k, None, false),
            surface(0.0, 2.75041 * k, None, true),
            surface(79.68360 * k, 2.95208 * k, sk16(), false),
            surface(-18.39533 * k, 0.0, None, false),
        ],
        stop_index: 4,
        image_distance: 42.20778 * k,
        entrance_pupil_diameter: 8.0,
        design_form: "GAGASAGA".into(),
    };
    finish(lens, false)
}

/// Air-spaced crown/flint doublet behind the stop (form SAGAGA), about
/// 50 mm focal length at f/6, focused at infinity.
pub fn doublet() -> LensSystem<f64> {
    let lens = LensSystem {
        surfaces: vec![
            surface(0.0, 2.0, None, true),
            surface(30.0, 4.0, Some(Glass::named("N-BK7", 1.5168, 64.17)), false),
            surface(-30.0, 0.5, None, false),
            surface(-29.0, 2.0, Some(Glass::named("F2", 1.62004, 36.37)), false),
            surface(-120.0, 40.0, None, false),
        ],
        stop_index: 0,
        image_distance: 40.0,
        entrance_pupil_diameter: 8.0,
        design_form: "SAGAGA".into(),
    };
    finish(lens, true)
}

/// Plano-convex singlet behind the stop (form SAGA), focused at infinity.
pub fn singlet() -> LensSystem<f64> {
    let lens = LensSystem {
        surfaces: vec![
            surface(0.0, 2.0, None, true),
            surface(25.0, 3.0, Some(Glass::named("N-BK7", 1.5168, 64.17)), false),
            surface(0.0, 45.0, None, false),
        ],
        stop_index: 0,
        image_distance: 45.0,
        entrance_pupil_diameter: 5.0,
        design_form: "SAGA".into(),
    };
    finish(lens, true)
}
