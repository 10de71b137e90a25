//! Line-of-sight channel model for massive-MIMO visible light links.
//!
//! A transmitter array of LEDs on one horizontal plane faces a receiver array
//! of photodetectors (PDs) on a parallel plane below it. The gain between LED
//! `i` and PD `j` follows the generalized Lambertian model:
//!
//! ```text
//! h_ij = (A_r / d_ij²) · R_o(φ_irr) · T_s · g(φ_inc) · cos(φ_inc)
//! ```
//!
//! where `R_o` is the Lambertian radiant intensity of the LED, `T_s` the
//! optical filter gain, and `g` the optical concentrator gain, which is zero
//! outside the PD field of view. Multipath reflections are not modeled; the
//! direct path dominates in the dense-array geometries this crate targets.
//!
//! All public angles are in degrees.

use crate::error::{Error, Result};

/// Regular rectangular grid of emitters or detectors on a horizontal plane.
///
/// Elements are indexed row-major with the x index fastest:
/// `index = iy * count_x + ix`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Number of elements along the room length (x).
    pub count_x: usize,
    /// Number of elements along the room width (y).
    pub count_y: usize,
    /// Center-to-center element spacing in metres.
    pub spacing_m: f64,
    /// Height of the plane above the floor in metres.
    pub plane_height_m: f64,
}

impl GridSpec {
    /// Total number of elements in the grid.
    pub fn count(&self) -> usize {
        self.count_x * self.count_y
    }
}

/// Full geometric and optical description of one transceiver configuration.
///
/// The LED grid is centered on the room footprint and points straight down;
/// the PD grid is centered, shifted laterally by `pd_plane_offset`, and points
/// straight up. LED power is carried for completeness but does not enter the
/// LOS gain formula.
#[derive(Debug, Clone, PartialEq)]
pub struct VlcScene {
    /// Room (length, width, height) in metres.
    pub room_size: (f64, f64, f64),
    /// Transmitter LED array.
    pub led_grid: GridSpec,
    /// Receiver PD array.
    pub pd_grid: GridSpec,
    /// Lateral (dx, dy) shift of the PD array in metres.
    pub pd_plane_offset: (f64, f64),
    /// LED half-power semi-angle in degrees.
    pub semi_angle_deg: f64,
    /// PD field of view in degrees.
    pub fov_deg: f64,
    /// Effective PD collection area in m².
    pub pd_area_m2: f64,
    /// Optical filter gain (dimensionless).
    pub filter_gain: f64,
    /// Refractive index of the optical concentrator.
    pub refractive_index: f64,
    /// Per-LED emitted power in watts (not used by the LOS gain).
    pub led_power_w: f64,
}

impl VlcScene {
    /// Scene with the reference optics (8 m × 8 m × 4 m room, 50° semi-angle,
    /// 45° FOV, 1 cm² PD, unit filter gain, concentrator index 1.5, 20 mW
    /// LEDs) and the given arrays. PD offset starts at zero.
    pub fn with_grids(led_grid: GridSpec, pd_grid: GridSpec) -> Self {
        Self {
            room_size: (8.0, 8.0, 4.0),
            led_grid,
            pd_grid,
            pd_plane_offset: (0.0, 0.0),
            semi_angle_deg: 50.0,
            fov_deg: 45.0,
            pd_area_m2: 1e-4,
            filter_gain: 1.0,
            refractive_index: 1.5,
            led_power_w: 0.02,
        }
    }

    /// 128-LED / 128-PD reference scene (16 × 8 arrays, 2 m plane separation).
    pub fn default_128() -> Self {
        Self::with_grids(
            GridSpec { count_x: 16, count_y: 8, spacing_m: 0.45, plane_height_m: 3.0 },
            GridSpec { count_x: 16, count_y: 8, spacing_m: 0.08, plane_height_m: 1.0 },
        )
    }

    /// 256-LED / 256-PD reference scene (16 × 16 arrays, 2 m plane separation).
    pub fn default_256() -> Self {
        Self::with_grids(
            GridSpec { count_x: 16, count_y: 16, spacing_m: 0.45, plane_height_m: 3.0 },
            GridSpec { count_x: 16, count_y: 16, spacing_m: 0.08, plane_height_m: 1.0 },
        )
    }

    /// Number of LEDs (matrix columns).
    pub fn n_t(&self) -> usize {
        self.led_grid.count()
    }

    /// Number of PDs (matrix rows).
    pub fn n_r(&self) -> usize {
        self.pd_grid.count()
    }

    /// Vertical distance between the LED and PD planes in metres.
    pub fn vertical_distance_m(&self) -> f64 {
        self.led_grid.plane_height_m - self.pd_grid.plane_height_m
    }

    /// Check every documented invariant of the scene.
    pub fn validate(&self) -> Result<()> {
        let (lr, wr, hr) = self.room_size;
        if !(lr > 0.0 && wr > 0.0 && hr > 0.0) {
            return Err(Error::InvalidScene(format!(
                "room dimensions must be positive, got {:?}",
                self.room_size
            )));
        }
        for (name, grid) in [("led", &self.led_grid), ("pd", &self.pd_grid)] {
            if grid.count_x == 0 || grid.count_y == 0 {
                return Err(Error::InvalidScene(format!("{name} grid has zero elements")));
            }
            if grid.spacing_m <= 0.0 {
                return Err(Error::InvalidScene(format!(
                    "{name} grid spacing must be positive, got {}",
                    grid.spacing_m
                )));
            }
            if grid.plane_height_m <= 0.0 || grid.plane_height_m >= hr {
                return Err(Error::InvalidScene(format!(
                    "{name} plane height {} outside room of height {hr}",
                    grid.plane_height_m
                )));
            }
        }
        if self.vertical_distance_m() <= 0.0 {
            return Err(Error::InvalidScene(format!(
                "LED plane ({} m) must sit above the PD plane ({} m)",
                self.led_grid.plane_height_m, self.pd_grid.plane_height_m
            )));
        }
        if !(self.semi_angle_deg > 0.0 && self.semi_angle_deg < 90.0) {
            return Err(Error::InvalidScene(format!(
                "semi-angle must lie in (0°, 90°), got {}",
                self.semi_angle_deg
            )));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 90.0) {
            return Err(Error::InvalidScene(format!(
                "FOV must lie in (0°, 90°], got {}",
                self.fov_deg
            )));
        }
        if self.pd_area_m2 <= 0.0 {
            return Err(Error::InvalidScene(format!(
                "PD area must be positive, got {}",
                self.pd_area_m2
            )));
        }
        if self.filter_gain <= 0.0 {
            return Err(Error::InvalidScene(format!(
                "filter gain must be positive, got {}",
                self.filter_gain
            )));
        }
        if self.refractive_index < 1.0 {
            return Err(Error::InvalidScene(format!(
                "refractive index must be >= 1, got {}",
                self.refractive_index
            )));
        }
        if self.led_power_w <= 0.0 {
            return Err(Error::InvalidScene(format!(
                "LED power must be positive, got {}",
                self.led_power_w
            )));
        }
        // LEDs are centered with no offset; a too-wide grid still escapes the room.
        for (x, y, _) in self.led_positions() {
            if x < 0.0 || x > lr || y < 0.0 || y > wr {
                return Err(Error::Geometry(format!(
                    "LED at ({x:.3}, {y:.3}) lies outside the {lr} m × {wr} m room"
                )));
            }
        }
        for (x, y, _) in self.pd_positions() {
            if x < 0.0 || x > lr || y < 0.0 || y > wr {
                return Err(Error::Geometry(format!(
                    "PD at ({x:.3}, {y:.3}) lies outside the {lr} m × {wr} m room \
                     (offset {:?})",
                    self.pd_plane_offset
                )));
            }
        }
        Ok(())
    }

    /// LED positions in metres, indexed `iy * count_x + ix`.
    pub fn led_positions(&self) -> Vec<(f64, f64, f64)> {
        grid_positions(&self.led_grid, self.room_size, (0.0, 0.0))
    }

    /// PD positions in metres (lateral offset applied), indexed `iy * count_x + ix`.
    pub fn pd_positions(&self) -> Vec<(f64, f64, f64)> {
        grid_positions(&self.pd_grid, self.room_size, self.pd_plane_offset)
    }
}

/// Positions of a centered grid, shifted by `offset`, row-major with x fastest.
fn grid_positions(
    grid: &GridSpec,
    room: (f64, f64, f64),
    offset: (f64, f64),
) -> Vec<(f64, f64, f64)> {
    let cx = room.0 / 2.0 + offset.0;
    let cy = room.1 / 2.0 + offset.1;
    let half_x = (grid.count_x as f64 - 1.0) / 2.0;
    let half_y = (grid.count_y as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(grid.count());
    for iy in 0..grid.count_y {
        for ix in 0..grid.count_x {
            let x = cx + (ix as f64 - half_x) * grid.spacing_m;
            let y = cy + (iy as f64 - half_y) * grid.spacing_m;
            out.push((x, y, grid.plane_height_m));
        }
    }
    out
}

/// Gain matrix of one transceiver configuration.
///
/// Rows are PDs (receivers), columns are LEDs (transmitters), matching the
/// `y = Hx` convention. Entries are dimensionless nonnegative gains; a pair
/// whose incidence angle exceeds the PD field of view contributes exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    n_r: usize,
    n_t: usize,
    entries: Vec<f64>,
}

impl ChannelMatrix {
    /// Build a matrix from row-major entries (rows = PDs).
    pub fn from_entries(n_r: usize, n_t: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n_r * n_t {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for a {n_r}×{n_t} matrix, got {}",
                n_r * n_t,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("channel gain {bad} is negative or non-finite")));
        }
        Ok(Self { n_r, n_t, entries })
    }

    /// Number of rows (PDs).
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    /// Number of columns (LEDs).
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Gain between PD `j` (row) and LED `i` (column).
    pub fn entry(&self, j: usize, i: usize) -> f64 {
        self.entries[j * self.n_t + i]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Fraction of exactly-zero entries.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.entries.iter().filter(|v| **v == 0.0).count();
        zeros as f64 / self.entries.len() as f64
    }
}

/// Order of Lambertian emission for a half-power semi-angle in degrees:
/// `m = −ln 2 / ln(cos φ_semi)`.
///
/// At 60° the order is exactly 1; it grows as the beam narrows and falls
/// toward 0 as the semi-angle widens toward 90°.
pub fn lambertian_order(semi_angle_deg: f64) -> Result<f64> {
    if !(semi_angle_deg > 0.0 && semi_angle_deg < 90.0) || !semi_angle_deg.is_finite() {
        return Err(Error::Domain(format!(
            "semi-angle must lie in (0°, 90°), got {semi_angle_deg}"
        )));
    }
    Ok(-std::f64::consts::LN_2 / semi_angle_deg.to_radians().cos().ln())
}

/// Lambertian radiant intensity `R_o(φ) = (m+1)/(2π) · cosᵐ(φ)` of the LED at
/// irradiance angle `φ` (degrees).
pub fn radiant_intensity(order: f64, irradiance_angle_deg: f64) -> Result<f64> {
    if !(order > 0.0) || !order.is_finite() {
        return Err(Error::Domain(format!("Lambertian order must be positive, got {order}")));
    }
    if !(0.0..=90.0).contains(&irradiance_angle_deg) {
        return Err(Error::Domain(format!(
            "irradiance angle must lie in [0°, 90°], got {irradiance_angle_deg}"
        )));
    }
    let cos = irradiance_angle_deg.to_radians().cos().max(0.0);
    Ok((order + 1.0) / (2.0 * std::f64::consts::PI) * cos.powf(order))
}

/// Optical concentrator gain: `n² / sin²(φ_oc)` inside the field of view,
/// zero outside it.
pub fn concentrator_gain(
    refractive_index: f64,
    incidence_angle_deg: f64,
    fov_deg: f64,
) -> Result<f64> {
    if refractive_index < 1.0 {
        return Err(Error::Domain(format!(
            "refractive index must be >= 1, got {refractive_index}"
        )));
    }
    if !(0.0..=90.0).contains(&incidence_angle_deg) {
        return Err(Error::Domain(format!(
            "incidence angle must lie in [0°, 90°], got {incidence_angle_deg}"
        )));
    }
    if !(fov_deg > 0.0 && fov_deg <= 90.0) {
        return Err(Error::Domain(format!("FOV must lie in (0°, 90°], got {fov_deg}")));
    }
    if incidence_angle_deg <= fov_deg {
        let sin_fov = fov_deg.to_radians().sin();
        Ok(refractive_index * refractive_index / (sin_fov * sin_fov))
    } else {
        Ok(0.0)
    }
}

/// LOS gain of one LED/PD pair.
///
/// `h = (A_r / d²) · R_o(φ_irr) · T_s · g(φ_inc) · cos(φ_inc)`, with the
/// concentrator gain `g` zeroing pairs outside the field of view. Angles in
/// degrees, distance in metres, area in m².
#[allow(clippy::too_many_arguments)]
pub fn channel_gain(
    pd_area_m2: f64,
    distance_m: f64,
    irradiance_angle_deg: f64,
    incidence_angle_deg: f64,
    order: f64,
    filter_gain: f64,
    refractive_index: f64,
    fov_deg: f64,
) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::Geometry(format!(
            "LED/PD distance must be positive, got {distance_m}"
        )));
    }
    let r_o = radiant_intensity(order, irradiance_angle_deg)?;
    let g = concentrator_gain(refractive_index, incidence_angle_deg, fov_deg)?;
    let cos_inc = incidence_angle_deg.to_radians().cos().max(0.0);
    Ok(pd_area_m2 / (distance_m * distance_m) * r_o * filter_gain * g * cos_inc)
}

/// Build the full gain matrix of a scene.
///
/// LEDs point straight down and PDs straight up on parallel planes, so each
/// pair's irradiance and incidence angles coincide; the builder computes both
/// from their own axis and checks the agreement.
pub fn build_channel_matrix(scene: &VlcScene) -> Result<ChannelMatrix> {
    scene.validate()?;
    let order = lambertian_order(scene.semi_angle_deg)?;
    let leds = scene.led_positions();
    let pds = scene.pd_positions();

    let mut entries = Vec::with_capacity(pds.len() * leds.len());
    for &(px, py, pz) in &pds {
        for &(lx, ly, lz) in &leds {
            let (dx, dy, dz) = (lx - px, ly - py, lz - pz);
            let d = (dx * dx + dy * dy + dz * dz).sqrt();
            if d <= 0.0 {
                return Err(Error::Geometry(
                    "coincident LED and PD positions".to_string(),
                ));
            }
            // The LED axis is -z, the PD axis +z; both angles come from the
            // vertical component of the same ray.
            let irradiance_deg = (dz / d).clamp(-1.0, 1.0).acos().to_degrees();
            let incidence_deg = (dz / d).clamp(-1.0, 1.0).acos().to_degrees();
            debug_assert!((irradiance_deg - incidence_deg).abs() < 1e-9);
            if irradiance_deg > 90.0 {
                return Err(Error::Geometry(format!(
                    "LED at ({lx:.2}, {ly:.2}, {lz:.2}) does not illuminate the \
                     PD plane above it"
                )));
            }
            entries.push(channel_gain(
                scene.pd_area_m2,
                d,
                irradiance_deg,
                incidence_deg,
                order,
                scene.filter_gain,
                scene.refractive_index,
                scene.fov_deg,
            )?);
        }
    }
    ChannelMatrix::from_entries(pds.len(), leds.len(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn lambertian_order_60_is_exactly_one() {
        let m = lambertian_order(60.0).unwrap();
        assert!((m - 1.0).abs() < 1e-12, "m(60°) = {m}");
    }

    #[test]
    fn lambertian_order_50_matches_scalar_evaluation() {
        // Independent evaluation of -ln2/ln(cos 50°).
        let expected = -(2.0f64.ln()) / 50.0f64.to_radians().cos().ln();
        assert!((expected - 1.5684159304466327).abs() < 1e-12);
        let m = lambertian_order(50.0).unwrap();
        assert!((m - expected).abs() < 1e-3, "m(50°) = {m}");
    }

    #[test]
    fn lambertian_order_near_90_is_small_positive_finite() {
        let m = lambertian_order(89.9).unwrap();
        assert!(m.is_finite());
        assert!(m > 0.0);
        assert!(m < 0.2, "m(89.9°) = {m} should approach 0");
    }

    #[test]
    fn lambertian_order_rejects_out_of_range() {
        assert!(matches!(lambertian_order(0.0), Err(Error::Domain(_))));
        assert!(matches!(lambertian_order(90.0), Err(Error::Domain(_))));
        assert!(matches!(lambertian_order(-5.0), Err(Error::Domain(_))));
        assert!(matches!(lambertian_order(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn radiant_intensity_on_axis() {
        let r = radiant_intensity(1.0, 0.0).unwrap();
        assert!((r - 1.0 / std::f64::consts::PI).abs() < 1e-12, "R_o(1, 0°) = {r}");

        // Direct evaluation of (m+1)/(2π) at the order used by the reference
        // 50° semi-angle.
        let r = radiant_intensity(1.5672, 0.0).unwrap();
        assert!((r - 0.40858256990551367).abs() < 1e-3, "R_o(1.5672, 0°) = {r}");
    }

    #[test]
    fn radiant_intensity_vanishes_at_grazing() {
        let r = radiant_intensity(1.0, 90.0).unwrap();
        assert!(r.abs() < 1e-12, "R_o(1, 90°) = {r}");
    }

    #[test]
    fn concentrator_gain_inside_and_outside_fov() {
        let g = concentrator_gain(1.5, 30.0, 45.0).unwrap();
        assert!((g - 4.5).abs() < 1e-12, "g(1.5, 30°, 45°) = {g}");

        let g = concentrator_gain(1.5, 46.0, 45.0).unwrap();
        assert_eq!(g, 0.0);

        let g = concentrator_gain(1.0, 0.0, 90.0).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_gain_aligned_pair() {
        // Independent scalar oracle: multiply the four factors by hand for an
        // aligned pair at d = 2 m with the reference optics.
        let m = -(2.0f64.ln()) / 50.0f64.to_radians().cos().ln();
        let r_o = (m + 1.0) / (2.0 * std::f64::consts::PI);
        let g = 1.5 * 1.5 / 45.0f64.to_radians().sin().powi(2);
        let expected = 1e-4 / 4.0 * r_o * 1.0 * g * 1.0;
        assert!((expected - 4.5987310265237024e-5).abs() < 1e-12);

        let h = channel_gain(1e-4, 2.0, 0.0, 0.0, m, 1.0, 1.5, 45.0).unwrap();
        assert!((h - expected).abs() < 1e-7, "h = {h}, expected {expected}");
    }

    #[test]
    fn channel_gain_zero_at_grazing_incidence() {
        let h = channel_gain(1e-4, 2.0, 0.0, 90.0, 1.0, 1.0, 1.5, 45.0).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn channel_gain_inverse_square_in_distance() {
        let h1 = channel_gain(1e-4, 2.0, 10.0, 10.0, 1.5, 1.0, 1.5, 45.0).unwrap();
        let h2 = channel_gain(1e-4, 4.0, 10.0, 10.0, 1.5, 1.0, 1.5, 45.0).unwrap();
        assert!(rel_err(h2, h1 / 4.0) < 1e-12, "h(2d) = {h2}, h(d)/4 = {}", h1 / 4.0);
    }

    #[test]
    fn channel_gain_rejects_degenerate_distance() {
        assert!(matches!(
            channel_gain(1e-4, 0.0, 0.0, 0.0, 1.0, 1.0, 1.5, 45.0),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn single_pair_matrix_matches_scalar_gain() {
        let scene = VlcScene::with_grids(
            GridSpec { count_x: 1, count_y: 1, spacing_m: 0.5, plane_height_m: 3.0 },
            GridSpec { count_x: 1, count_y: 1, spacing_m: 0.5, plane_height_m: 1.0 },
        );
        let h = build_channel_matrix(&scene).unwrap();
        assert_eq!((h.n_r(), h.n_t()), (1, 1));
        let expected = 4.5987310265237024e-5;
        assert!(
            (h.entry(0, 0) - expected).abs() < 1e-7,
            "h = {}, expected {expected}",
            h.entry(0, 0)
        );
    }

    #[test]
    fn matrix_matches_independently_recomputed_geometry() {
        let scene = VlcScene::with_grids(
            GridSpec { count_x: 4, count_y: 3, spacing_m: 0.6, plane_height_m: 3.2 },
            GridSpec { count_x: 3, count_y: 2, spacing_m: 0.25, plane_height_m: 0.9 },
        );
        let h = build_channel_matrix(&scene).unwrap();
        let order = lambertian_order(scene.semi_angle_deg).unwrap();

        // Recompute the geometry from scratch: centered grids, x index fastest.
        let (lr, wr, _) = scene.room_size;
        for jy in 0..2usize {
            for jx in 0..3usize {
                for iy in 0..3usize {
                    for ix in 0..4usize {
                        let px = lr / 2.0 + (jx as f64 - 1.0) * 0.25;
                        let py = wr / 2.0 + (jy as f64 - 0.5) * 0.25;
                        let lx = lr / 2.0 + (ix as f64 - 1.5) * 0.6;
                        let ly = wr / 2.0 + (iy as f64 - 1.0) * 0.6;
                        let (dx, dy, dz) = (lx - px, ly - py, 3.2 - 0.9);
                        let d = (dx * dx + dy * dy + dz * dz).sqrt();
                        let angle = (dz / d).acos().to_degrees();
                        let expected = channel_gain(
                            scene.pd_area_m2,
                            d,
                            angle,
                            angle,
                            order,
                            scene.filter_gain,
                            scene.refractive_index,
                            scene.fov_deg,
                        )
                        .unwrap();
                        let j = jy * 3 + jx;
                        let i = iy * 4 + ix;
                        assert!(
                            rel_err(h.entry(j, i), expected) < 1e-12 || expected == h.entry(j, i),
                            "entry ({j}, {i}): {} vs {expected}",
                            h.entry(j, i)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn narrow_fov_zeroes_rows_out_of_view() {
        // A PD shifted far to the side sees every LED beyond its FOV.
        let mut scene = VlcScene::with_grids(
            GridSpec { count_x: 2, count_y: 2, spacing_m: 0.4, plane_height_m: 3.0 },
            GridSpec { count_x: 1, count_y: 1, spacing_m: 0.1, plane_height_m: 1.0 },
        );
        scene.pd_plane_offset = (3.5, 0.0);
        let h = build_channel_matrix(&scene).unwrap();
        for i in 0..h.n_t() {
            assert_eq!(h.entry(0, i), 0.0, "column {i}");
        }
    }

    #[test]
    fn swapping_led_indices_permutes_columns() {
        let scene = VlcScene::with_grids(
            GridSpec { count_x: 3, count_y: 2, spacing_m: 0.5, plane_height_m: 3.0 },
            GridSpec { count_x: 2, count_y: 2, spacing_m: 0.3, plane_height_m: 1.0 },
        );
        let h = build_channel_matrix(&scene).unwrap();

        // Swap two LED positions by hand and rebuild entries directly.
        let order = lambertian_order(scene.semi_angle_deg).unwrap();
        let mut leds = scene.led_positions();
        leds.swap(1, 4);
        let pds = scene.pd_positions();
        for (j, &(px, py, pz)) in pds.iter().enumerate() {
            for (i, &(lx, ly, lz)) in leds.iter().enumerate() {
                let (dx, dy, dz) = (lx - px, ly - py, lz - pz);
                let d = (dx * dx + dy * dy + dz * dz).sqrt();
                let angle = (dz / d).clamp(-1.0, 1.0).acos().to_degrees();
                let gain = channel_gain(
                    scene.pd_area_m2,
                    d,
                    angle,
                    angle,
                    order,
                    scene.filter_gain,
                    scene.refractive_index,
                    scene.fov_deg,
                )
                .unwrap();
                let original_col = match i {
                    1 => 4,
                    4 => 1,
                    other => other,
                };
                assert_eq!(gain, h.entry(j, original_col), "pd {j}, led {i}");
            }
        }
    }

    #[test]
    fn gain_decreases_monotonically_in_distance() {
        let mut last = f64::INFINITY;
        for d in [1.0, 1.5, 2.0, 3.0, 5.0, 8.0] {
            let h = channel_gain(1e-4, d, 20.0, 20.0, 1.5, 1.0, 1.5, 45.0).unwrap();
            assert!(h < last, "h({d}) = {h} not below {last}");
            last = h;
        }
    }

    #[test]
    fn zero_count_grows_as_fov_shrinks() {
        let mut scene = VlcScene::default_128();
        scene.pd_grid.spacing_m = 0.4; // widen the receiver so edge PDs lose view
        let mut last_zero_fraction = -1.0;
        for fov in [45.0, 35.0, 25.0, 15.0] {
            scene.fov_deg = fov;
            let h = build_channel_matrix(&scene).unwrap();
            let zf = h.zero_fraction();
            assert!(
                zf > last_zero_fraction,
                "fov {fov}°: zero fraction {zf} did not grow from {last_zero_fraction}"
            );
            last_zero_fraction = zf;
        }
        assert!(last_zero_fraction > 0.0);
    }

    #[test]
    fn pd_offset_outside_room_is_a_geometry_error() {
        let mut scene = VlcScene::default_128();
        scene.pd_plane_offset = (7.0, 0.0);
        assert!(matches!(build_channel_matrix(&scene), Err(Error::Geometry(_))));
    }

    #[test]
    fn invalid_scenes_are_rejected() {
        let mut scene = VlcScene::default_128();
        scene.semi_angle_deg = 95.0;
        assert!(matches!(scene.validate(), Err(Error::InvalidScene(_))));

        let mut scene = VlcScene::default_128();
        scene.pd_grid.plane_height_m = 3.5; // above the LED plane
        assert!(matches!(scene.validate(), Err(Error::InvalidScene(_))));

        let mut scene = VlcScene::default_128();
        scene.refractive_index = 0.9;
        assert!(matches!(scene.validate(), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn default_scenes_are_valid_and_sized() {
        for (scene, n) in [(VlcScene::default_128(), 128), (VlcScene::default_256(), 256)] {
            scene.validate().unwrap();
            assert_eq!(scene.n_t(), n);
            assert_eq!(scene.n_r(), n);
            assert!((scene.vertical_distance_m() - 2.0).abs() < 1e-12);
        }
    }
}
