//! Shared inputs for the benchmarks.

use contactcal::simulator::{render_depth, trial_extrinsic, DepthScanConfig, Scene};
use contactcal::{PointCloud, RigidTransform, Vec3};

/// Depth scan of the two-prism scene at `density` points per square metre (camera frame, with normals).
pub fn depth_scan(density: f64) -> PointCloud {
    let scene = Scene::preset("two_prisms_table").expect("built-in preset");
    render_depth(&scene, &DepthScanConfig::new(trial_extrinsic(), density, 1)).expect("valid scan config")
}

/// Noiseless contact raster of every camera-facing patch (base frame).
pub fn contact_map(spacing: f64) -> PointCloud {
    let scene = Scene::preset("two_prisms_table").expect("built-in preset");
    let labels = scene.visible_from(&trial_extrinsic().inverse().translation);
    let (points, _) = scene.raster_surface(&labels, spacing).expect("visible patches exist");
    PointCloud::new(points)
}

/// The true extrinsic perturbed by about 1 cm and 1 deg.
pub fn perturbed_start() -> RigidTransform {
    let nudge = RigidTransform::new(
        contactcal::se3::rot_z(1f64.to_radians()),
        Vec3::new(0.008, -0.006, 0.004),
    );
    nudge.compose(&trial_extrinsic())
}
