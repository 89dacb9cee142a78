//! Minimal SVG document builder. Coordinates are written with fixed
//! precision so repeated runs produce identical files.

use std::fmt::Write;

pub struct Svg {
    width: f64,
    height: f64,
    attrs: String,
    body: String,
}

fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            attrs: String::new(),
            body: String::new(),
        }
    }

    /// Extra attribute on the root element.
    pub fn root_attr(&mut self, name: &str, value: &str) {
        let _ = write!(self.attrs, " {name}=\"{}\"", escape(value));
    }

    pub fn open_group(&mut self, class: &str) {
        let _ = writeln!(self.body, "<g class=\"{class}\">");
    }

    pub fn close_group(&mut self) {
        self.body.push_str("</g>\n");
    }

    pub fn polyline(&mut self, class: &str, pts: &[[f64; 2]], stroke: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, num(p[0]), num(p[1]));
        }
        let _ = writeln!(
            self.body,
            "<path class=\"{class}\" d=\"{d}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{}\"/>",
            num(width)
        );
    }

    pub fn line(&mut self, class: &str, a: [f64; 2], b: [f64; 2], stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            "<line class=\"{class}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"{}\"/>",
            num(a[0]),
            num(a[1]),
            num(b[0]),
            num(b[1]),
            num(width)
        );
    }

    pub fn circle(&mut self, class: &str, c: [f64; 2], r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "<circle class=\"{class}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"/>",
            num(c[0]),
            num(c[1]),
            num(r)
        );
    }

    pub fn text(&mut self, at: [f64; 2], size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{}\">{}</text>",
            num(at[0]),
            num(at[1]),
            num(size),
            escape(content)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\"{a}>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{b}</svg>\n",
            w = num(self.width),
            h = num(self.height),
            a = self.attrs,
            b = self.body
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_is_stable() {
        let mut s = Svg::new(10.0, 5.0);
        s.circle("spot", [1.0, -0.0], 0.5, "red");
        let a = s.finish();
        assert!(a.contains("cy=\"0.0000\""));
        assert!(a.ends_with("</svg>\n"));
    }
}
