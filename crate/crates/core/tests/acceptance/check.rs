use std::fmt::Write;

/// Result of one criterion: pass flag and a human-readable detail line.
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }

    /// Passes only if every part passes; details are joined.
    pub fn all(parts: Vec<Outcome>) -> Self {
        let pass = parts.iter().all(|p| p.pass);
        let detail = parts.into_iter().map(|p| p.detail).collect::<Vec<_>>().join("; ");
        Outcome { pass, detail }
    }
}

#[derive(Default)]
pub struct Report {
    failed: usize,
    total: usize,
}

impl Report {
    pub fn record(&mut self, id: usize, name: &str, o: Outcome) {
        self.total += 1;
        if !o.pass {
            self.failed += 1;
        }
        println!("{} [{id}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }

    pub fn finish(self) -> i32 {
        println!("{} of {} criteria passed", self.total - self.failed, self.total);
        i32::from(self.failed > 0)
    }
}

/// Trend check on values ordered by decreasing `s`: each step should not
/// increase. At most one increase is tolerated and only if smaller than
/// `tolerance(prev, next)` allows.
pub struct Trend {
    pub inversions: usize,
    pub worst: f64,
    pub pass: bool,
}

pub fn non_increasing(values: &[f64], within: impl Fn(f64, f64) -> bool) -> Trend {
    let mut inversions = 0;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for w in values.windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            worst = worst.max(w[1] - w[0]);
            ok &= within(w[0], w[1]);
        }
    }
    Trend {
        inversions,
        worst,
        pass: ok && inversions <= 1,
    }
}

pub fn series(values: &[f64], digits: usize) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:.digits$}").unwrap();
    }
    s
}

