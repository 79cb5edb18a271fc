//! Visualization: vector maps as SVG, grid planes as grayscale images.

use crate::extract::dominant_eigenvector;
use crate::mapupdate::VectorMap;
use crate::sdf::{Field, SdfGrid};
use image::{GrayImage, Luma};
use nalgebra::{Matrix2, Point2};
use std::fmt::Write as _;

/// One 3-sigma uncertainty ellipse: center, semi-axes, rotation (radians).
struct Ellipse {
    center: Point2<f64>,
    rx: f64,
    ry: f64,
    angle: f64,
}

fn covariance_ellipse(center: Point2<f64>, q: &Matrix2<f64>) -> Ellipse {
    let (axis, l1, l2) = dominant_eigenvector(q);
    Ellipse {
        center,
        rx: 3.0 * l1.max(0.0).sqrt(),
        ry: 3.0 * l2.max(0.0).sqrt(),
        angle: axis.y.atan2(axis.x),
    }
}

fn fmt(x: f64) -> String {
    // Fixed decimals keep the SVG compact and stable; micrometer precision
    // is far below drawing scale.
    format!("{x:.6}")
}

/// Render the map as an SVG drawing: one path per line segment plus a
/// 3-sigma covariance ellipse around each endpoint. An empty map yields a
/// small valid document. The drawing uses world coordinates with the y
/// axis pointing up.
pub fn render_map_svg(map: &VectorMap) -> String {
    // Bounds over segments and ellipse extents.
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut ellipses = Vec::with_capacity(map.lines.len() * 2);
    for l in &map.lines {
        for (p, q) in [(l.p1, &l.q1), (l.p2, &l.q2)] {
            let e = covariance_ellipse(p, q);
            let reach = e.rx.max(e.ry);
            min.x = min.x.min(p.x - reach);
            min.y = min.y.min(p.y - reach);
            max.x = max.x.max(p.x + reach);
            max.y = max.y.max(p.y + reach);
            ellipses.push(e);
        }
    }
    if map.lines.is_empty() {
        min = Point2::new(0.0, 0.0);
        max = Point2::new(1.0, 1.0);
    }
    let margin = 0.05 * ((max.x - min.x).max(max.y - min.y)).max(1.0);
    min -= nalgebra::Vector2::new(margin, margin);
    max += nalgebra::Vector2::new(margin, margin);
    let (w, h) = (max.x - min.x, max.y - min.y);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="800" height="{:.0}">"#,
        fmt(min.x),
        fmt(-max.y),
        fmt(w),
        fmt(h),
        800.0 * h / w,
    );
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="white"/>"#,
        fmt(min.x),
        fmt(-max.y),
        fmt(w),
        fmt(h),
    );
    // Flip y so the world's y axis points up in the drawing.
    let _ = writeln!(out, r#"<g transform="scale(1,-1)">"#);
    let stroke = 0.01 * w.max(h);
    for l in &map.lines {
        let _ = writeln!(
            out,
            r##"<path d="M {} {} L {} {}" stroke="#1a1a1a" stroke-width="{}" stroke-linecap="round" fill="none"/>"##,
            fmt(l.p1.x),
            fmt(l.p1.y),
            fmt(l.p2.x),
            fmt(l.p2.y),
            fmt(stroke),
        );
    }
    for e in &ellipses {
        let _ = writeln!(
            out,
            r##"<ellipse cx="0" cy="0" rx="{}" ry="{}" transform="translate({} {}) rotate({})" fill="#2266cc" fill-opacity="0.18" stroke="#2266cc" stroke-width="{}"/>"##,
            fmt(e.rx.max(1e-6)),
            fmt(e.ry.max(1e-6)),
            fmt(e.center.x),
            fmt(e.center.y),
            fmt(e.angle.to_degrees()),
            fmt(stroke * 0.3),
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

/// Render one plane of a grid as a grayscale image, oriented so the
/// world's y axis points up (grid row 0 is the bottom image row).
///
/// The weight plane maps confidence 0 to black and 1 to white (the
/// deployment fraction for accumulated grids, the raw weight relative to
/// the maximum otherwise). The value plane maps -`delta` to black and
/// +`delta` to white. An empty grid yields a single black pixel.
pub fn render_sdf_image(grid: &SdfGrid, field: Field, delta: f64) -> GrayImage {
    if grid.is_empty() {
        return GrayImage::new(1, 1);
    }
    let (w, h) = (grid.width(), grid.height());
    let mut img = GrayImage::new(w as u32, h as u32);
    let w_max = grid
        .weight_plane()
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for iy in 0..h {
        for ix in 0..w {
            let level = match field {
                Field::Weight => {
                    if grid.normalized() {
                        grid.weight_fraction_at(ix, iy)
                    } else {
                        grid.weight_sum_at(ix, iy) / w_max
                    }
                }
                Field::Value => (grid.value_at(ix, iy) + delta) / (2.0 * delta),
            };
            let gray = (level.clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(ix as u32, (h - 1 - iy) as u32, Luma([gray]));
        }
    }
    img
}
