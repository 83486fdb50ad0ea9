//! Tab-separated report assembly: `#`-prefixed comment/header lines,
//! numeric rows in a stable exponential format.

use mlz::nalgebra::DMatrix;
use mlz::num_complex::Complex64;

pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Self { lines: Vec::new() }
    }

    pub fn comment(&mut self, text: impl AsRef<str>) {
        self.lines.push(format!("# {}", text.as_ref()));
    }

    pub fn header(&mut self, cols: &[&str]) {
        self.lines.push(format!("# {}", cols.join("\t")));
    }

    pub fn row(&mut self, cells: &[String]) {
        self.lines.push(cells.join("\t"));
    }

    pub fn raw(&mut self, text: &str) {
        for line in text.lines() {
            self.lines.push(line.to_string());
        }
    }

    pub fn real_matrix(&mut self, title: &str, m: &DMatrix<f64>) {
        self.comment(title);
        for i in 0..m.nrows() {
            let cells: Vec<String> = (0..m.ncols()).map(|j| num(m[(i, j)])).collect();
            self.row(&cells);
        }
    }

    pub fn complex_matrix(&mut self, title: &str, m: &DMatrix<Complex64>) {
        self.real_matrix(&format!("{title} (real part)"), &m.map(|z| z.re));
        self.real_matrix(&format!("{title} (imaginary part)"), &m.map(|z| z.im));
    }

    pub fn finish(self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

impl Default for Report {
    fn default() -> Self {
        Self::new()
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.10e}")
}

/// FNV-1a fingerprint of the canonical model text, for report headers.
pub fn digest(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
