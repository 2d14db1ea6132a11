//! CSV and SVG writers for maps, scans, boundaries and roots.

use num::complex::Complex64;

use crate::boundary::BoundaryPolyline;
use crate::regions::{RegionMap, Scan};

/// Scientific notation with 17 significant digits, so files are byte-stable
/// across runs and round-trip exactly.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `p,q,label,component`, one row per node. The component column is empty
/// for marginal and out-of-model nodes.
pub fn map_csv(map: &RegionMap, names: &[String]) -> String {
    let mut out = format!("{},label,component\n", names.join(","));
    for (idx, label) in map.grid.labels().iter().enumerate() {
        let coords: Vec<String> = map.grid.point(idx).into_iter().map(num).collect();
        let comp = map.component_of[idx]
            .filter(|_| label.is_decided())
            .map(|c| c.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{},{label},{comp}\n", coords.join(",")));
    }
    out
}

pub fn scan_csv(scan: &Scan, name: &str) -> String {
    let mut out = format!("{name},label\n");
    for (idx, label) in scan.grid.labels().iter().enumerate() {
        out.push_str(&format!("{},{label}\n", num(scan.grid.point(idx)[0])));
    }
    out
}

/// `p,q,r,refined`; polylines are separated by a blank line.
pub fn boundary_csv(lines: &[BoundaryPolyline], names: &[String]) -> String {
    let mut out = format!("{},r,refined\n", names.join(","));
    for (n, line) in lines.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        for p in &line.points {
            let coords: Vec<String> = p.point.iter().copied().map(num).collect();
            out.push_str(&format!(
                "{},{},{}\n",
                coords.join(","),
                num(p.r),
                p.refined
            ));
        }
    }
    out
}

pub fn roots_csv(roots: &[Complex64]) -> String {
    let mut out = String::from("re,im,arg\n");
    for z in roots {
        out.push_str(&format!("{},{},{}\n", num(z.re), num(z.im), num(z.arg())));
    }
    out
}

const PALETTE: [&str; 8] = [
    "#4c9a5f", "#d1495b", "#edae49", "#00798c", "#8d6a9f", "#c97c5d", "#3d5a80", "#a3a380",
];

/// Raster of the region map with boundary polylines on top. Stable nodes
/// are green, each unstable count gets its own colour, undecided nodes grey.
pub fn map_svg(map: &RegionMap, lines: &[BoundaryPolyline], names: &[String]) -> String {
    const SIZE: f64 = 600.0;
    const PAD: f64 = 50.0;
    let grid = &map.grid;
    let [w, h] = grid.shape();
    let (x0, x1) = grid.bounds(0);
    let (y0, y1) = grid.bounds(1);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * SIZE;
    let sy = |y: f64| PAD + SIZE - (y - y0) / (y1 - y0) * SIZE;
    let (cw, ch) = (SIZE / w as f64, SIZE / h as f64);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        SIZE + 2.0 * PAD
    );
    out.push_str("<g shape-rendering=\"crispEdges\">\n");
    for (idx, label) in grid.labels().iter().enumerate() {
        let (i, j) = grid.ij(idx);
        let fill = match label {
            crate::slice::CellLabel::Count(k) => PALETTE[k % PALETTE.len()],
            crate::slice::CellLabel::Marginal => "#888888",
            crate::slice::CellLabel::OutOfModel => "#dddddd",
        };
        out.push_str(&format!(
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{fill}\"/>\n",
            PAD + i as f64 * cw,
            PAD + SIZE - (j + 1) as f64 * ch,
            cw + 0.05,
            ch + 0.05
        ));
    }
    out.push_str("</g>\n");
    for line in lines {
        let pts: Vec<String> = line
            .points
            .iter()
            .map(|p| format!("{:.3},{:.3}", sx(p.point[0]), sy(p.point[1])))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }
    out.push_str(&format!(
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    let label = |x: f64, y: f64, anchor: &str, text: &str| {
        format!("<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"{anchor}\">{text}</text>\n")
    };
    out.push_str(&label(
        PAD + SIZE / 2.0,
        SIZE + 2.0 * PAD - 12.0,
        "middle",
        &names[0],
    ));
    out.push_str(&label(PAD, SIZE + PAD + 18.0, "start", &format!("{x0}")));
    out.push_str(&label(
        PAD + SIZE,
        SIZE + PAD + 18.0,
        "end",
        &format!("{x1}"),
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{0:.1}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1})\">{1}</text>\n",
        PAD + SIZE / 2.0,
        names[1]
    ));
    out.push_str(&label(PAD - 6.0, PAD + SIZE, "end", &format!("{y0}")));
    out.push_str(&label(PAD - 6.0, PAD + 12.0, "end", &format!("{y1}")));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = num(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(s, "3.0000000000000004e-1");
    }

    #[test]
    fn roots_table() {
        let csv = roots_csv(&[Complex64::new(0.0, 1.0)]);
        let row = csv.lines().nth(1).unwrap();
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[1], 1.0);
        assert!((cols[2] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
