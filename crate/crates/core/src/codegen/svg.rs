use std::fmt::Write as _;

use crate::scene::Scene;

/// Pixels per millimetre.
pub const DEFAULT_SCALE: f64 = 0.05;

const GLYPH_RADIUS_MM: f64 = 400.0;
const MARGIN_MM: i64 = 1000;
const LEGEND_ROW_PX: f64 = 16.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_num(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    let s = format!("{r:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Top-down view: +x (front) points up, +y (left) points left. One glyph
/// per object with an orientation tick, 1 m grid lines and a legend.
pub fn emit_svg(scene: &Scene, scale: f64) -> String {
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { DEFAULT_SCALE };
    let placed: Vec<_> = scene.placed().collect();
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (-MARGIN_MM, MARGIN_MM, -MARGIN_MM, MARGIN_MM);
    for (_, p) in &placed {
        min_x = min_x.min(p.coord.x - MARGIN_MM);
        max_x = max_x.max(p.coord.x + MARGIN_MM);
        min_y = min_y.min(p.coord.y - MARGIN_MM);
        max_y = max_y.max(p.coord.y + MARGIN_MM);
    }
    let snap_down = |v: i64| v.div_euclid(1000) * 1000;
    let snap_up = |v: i64| -(-v).div_euclid(1000) * 1000;
    let (min_x, max_x, min_y, max_y) = (snap_down(min_x), snap_up(max_x), snap_down(min_y), snap_up(max_y));

    // screen: u grows right (= -y), v grows down (= -x)
    let u = |y: f64| (max_y as f64 - y) * scale;
    let v = |x: f64| (max_x as f64 - x) * scale;
    let width = (max_y - min_y) as f64 * scale;
    let plot_h = (max_x - min_x) as f64 * scale;
    let height = plot_h + LEGEND_ROW_PX * (placed.len() as f64 + 1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = fmt_num(width),
        h = fmt_num(height)
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, fmt_num(width), fmt_num(height));
    let _ = writeln!(s, r##"<g class="grid" stroke="#dddddd" stroke-width="1">"##);
    let mut x = min_x;
    while x <= max_x {
        let _ = writeln!(s, r#"<line x1="0" y1="{p}" x2="{w}" y2="{p}"/>"#, p = fmt_num(v(x as f64)), w = fmt_num(width));
        x += 1000;
    }
    let mut y = min_y;
    while y <= max_y {
        let _ = writeln!(s, r#"<line x1="{p}" y1="0" x2="{p}" y2="{h}"/>"#, p = fmt_num(u(y as f64)), h = fmt_num(plot_h));
        y += 1000;
    }
    let _ = writeln!(s, "</g>");

    let r = GLYPH_RADIUS_MM * scale;
    for (i, (o, p)) in placed.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let (cx, cy) = (p.coord.x as f64, p.coord.y as f64);
        let rad = p.dir.radians();
        let tip = (cx + 2.0 * GLYPH_RADIUS_MM * rad.cos(), cy + 2.0 * GLYPH_RADIUS_MM * rad.sin());
        let dash = if o.is_guarding() { r#" stroke-dasharray="4 2" fill-opacity="0.1""# } else { r#" fill-opacity="0.6""# };
        let _ = writeln!(
            s,
            r#"<g class="object"><title>{name} {coord} {deg}°</title><circle cx="{x}" cy="{y}" r="{r}" fill="{color}" stroke="{color}"{dash}/><line x1="{x}" y1="{y}" x2="{tx}" y2="{ty}" stroke="black" stroke-width="2"/><text x="{x}" y="{ly}" font-size="10" text-anchor="middle">{label}</text></g>"#,
            name = escape(&o.display_name),
            coord = p.coord,
            deg = crate::scene::format_degrees(p.dir.degrees()),
            x = fmt_num(u(cy)),
            y = fmt_num(v(cx)),
            r = fmt_num(r),
            tx = fmt_num(u(tip.1)),
            ty = fmt_num(v(tip.0)),
            ly = fmt_num(v(cx) + r + 10.0),
            label = i + 1,
        );
    }

    let _ = writeln!(s, r#"<g class="legend" font-size="11">"#);
    let _ = writeln!(
        s,
        r#"<text x="4" y="{}">front = up, left = left, grid 1 m</text>"#,
        fmt_num(plot_h + LEGEND_ROW_PX - 4.0)
    );
    for (i, (o, p)) in placed.iter().enumerate() {
        let row = plot_h + LEGEND_ROW_PX * (i as f64 + 2.0) - 4.0;
        let _ = writeln!(
            s,
            r#"<rect x="4" y="{ry}" width="8" height="8" fill="{c}"/><text x="16" y="{y}">{n}. {name} {coord}</text>"#,
            ry = fmt_num(row - 8.0),
            c = PALETTE[i % PALETTE.len()],
            y = fmt_num(row),
            n = i + 1,
            name = escape(&o.display_name),
            coord = p.coord,
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}
