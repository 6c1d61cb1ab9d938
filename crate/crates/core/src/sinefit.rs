//! Least-squares fit of `A sin(wn) + B cos(wn) + C` to a sampled sequence.

/// Coefficients of a fitted sinusoid plus offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineFit {
    pub sin: f64,
    pub cos: f64,
    pub offset: f64,
    /// RMS of the fit residual.
    pub residual: f64,
}

impl SineFit {
    pub fn amplitude(&self) -> f64 {
        self.sin.hypot(self.cos)
    }
}

/// Fits `y[k]` sampled at `n = start + k`. Returns `None` when the normal
/// equations are singular (e.g. `omega` is 0 or pi, where the sine column
/// vanishes).
pub fn fit_sinusoid(omega: f64, start: i64, y: &[f64]) -> Option<SineFit> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (k, &v) in y.iter().enumerate() {
        let n = (start + k as i64) as f64;
        let row = [(omega * n).sin(), (omega * n).cos(), 1.0];
        for i in 0..3 {
            aty[i] += row[i] * v;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let [a, b, c] = solve3(ata, aty)?;

    let mut sq = 0.0;
    for (k, &v) in y.iter().enumerate() {
        let n = (start + k as i64) as f64;
        let r = v - (a * (omega * n).sin() + b * (omega * n).cos() + c);
        sq += r * r;
    }
    Some(SineFit {
        sin: a,
        cos: b,
        offset: c,
        residual: (sq / y.len().max(1) as f64).sqrt(),
    })
}

// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (k, p) in pivot_row.iter().enumerate().skip(col) {
                m[row][k] -= f * p;
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - tail) / m[row][row];
    }
    Some(x)
}
