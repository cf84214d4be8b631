use super::{LinearProgram, LpError, LpSolution, LpStatus, Sense, BREAKDOWN_TOL, FEAS_TOL, PIVOT_TOL};

/// Reduced-cost threshold for declaring a column attractive.
const OPT_TOL: f64 = 1e-9;
/// Tableau entries below this magnitude are skipped when eliminating.
const DROP_TOL: f64 = 1e-14;

/// How an original variable is expressed through nonnegative columns.
#[derive(Clone, Copy, Debug)]
enum ColumnMap {
    /// x = lo + x'
    Shift { col: usize, lo: f64 },
    /// x = hi - x'
    Mirror { col: usize, hi: f64 },
    /// x = x+ - x-
    Split { pos: usize, neg: usize },
}

struct StandardRow {
    coefs: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
    negated: bool,
}

struct Tableau {
    m: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    n_cols: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.n_cols]
    }

    fn pivot(&mut self, r: usize, e: usize, reduced: &mut [f64]) -> Result<(), LpError> {
        let w = self.width;
        let piv = self.data[r * w + e];
        if piv.abs() < BREAKDOWN_TOL {
            return Err(LpError::NumericalBreakdown(piv.abs()));
        }
        let inv = 1.0 / piv;
        let mut nz = Vec::new();
        for k in 0..w {
            let v = &mut self.data[r * w + k];
            if *v != 0.0 {
                *v *= inv;
                if v.abs() < DROP_TOL {
                    *v = 0.0;
                } else {
                    nz.push(k);
                }
            }
        }
        self.data[r * w + e] = 1.0;
        let prow: Vec<f64> = nz.iter().map(|&k| self.data[r * w + k]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.data[i * w + e];
            if f == 0.0 {
                continue;
            }
            let base = i * w;
            for (&k, &p) in nz.iter().zip(&prow) {
                self.data[base + k] -= f * p;
            }
            self.data[base + e] = 0.0;
            let rhs = &mut self.data[base + self.n_cols];
            if *rhs < 0.0 && *rhs > -FEAS_TOL {
                *rhs = 0.0;
            }
        }
        let f = reduced[e];
        if f != 0.0 {
            for (&k, &p) in nz.iter().zip(&prow) {
                if k < self.n_cols {
                    reduced[k] -= f * p;
                }
            }
            reduced[e] = 0.0;
        }
        self.basis[r] = e;
        Ok(())
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let base = i * self.width;
            for (j, dj) in d.iter_mut().enumerate() {
                *dj -= cb * self.data[base + j];
            }
        }
        d
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

/// Runs primal simplex iterations on `tab` for `cost` until optimal or
/// unbounded. Columns with `allowed[j] == false` never enter.
fn iterate(tab: &mut Tableau, cost: &[f64], allowed: &[bool], iterations: &mut usize) -> Result<PhaseEnd, LpError> {
    let mut reduced = tab.reduced_costs(cost);
    let dantzig_limit = 10 * (tab.m + tab.n_cols);
    let hard_limit = 50 * (tab.m + tab.n_cols) + 1000;
    let mut phase_iter = 0usize;
    loop {
        if phase_iter > hard_limit {
            return Err(LpError::IterationLimit(hard_limit));
        }
        let bland = phase_iter >= dantzig_limit;
        let mut entering = None;
        let mut best = -OPT_TOL;
        for j in 0..tab.n_cols {
            if !allowed[j] || reduced[j] >= -OPT_TOL {
                continue;
            }
            if bland {
                entering = Some(j);
                break;
            }
            if reduced[j] < best {
                best = reduced[j];
                entering = Some(j);
            }
        }
        let Some(e) = entering else {
            return Ok(PhaseEnd::Optimal);
        };

        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..tab.m {
            let a = tab.at(i, e);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = tab.rhs(i).max(0.0) / a;
            let better = match leave {
                None => true,
                Some(l) => {
                    let tie = (ratio - best_ratio).abs() <= 1e-12 * best_ratio.abs().max(1.0);
                    if tie {
                        tab.basis[i] < tab.basis[l]
                    } else {
                        ratio < best_ratio
                    }
                }
            };
            if better {
                best_ratio = ratio;
                leave = Some(i);
            }
        }
        let Some(r) = leave else {
            return Ok(PhaseEnd::Unbounded);
        };
        tab.pivot(r, e, &mut reduced)?;
        phase_iter += 1;
        *iterations += 1;
        // Periodic refresh keeps round-off in the pricing row bounded.
        if phase_iter % 200 == 0 {
            reduced = tab.reduced_costs(cost);
        }
    }
}

pub(super) fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.n_vars();

    // Columns for the original variables.
    let mut maps = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            maps.push(ColumnMap::Shift { col: n_struct, lo });
            if hi.is_finite() {
                bound_rows.push((n_struct, hi - lo));
            }
            n_struct += 1;
        } else if hi.is_finite() {
            maps.push(ColumnMap::Mirror { col: n_struct, hi });
            n_struct += 1;
        } else {
            maps.push(ColumnMap::Split {
                pos: n_struct,
                neg: n_struct + 1,
            });
            n_struct += 2;
        }
    }

    let mut struct_cost = vec![0.0; n_struct];
    let mut obj_offset = 0.0;
    for (j, map) in maps.iter().enumerate() {
        let c = lp.objective[j];
        match *map {
            ColumnMap::Shift { col, lo } => {
                struct_cost[col] = c;
                obj_offset += c * lo;
            }
            ColumnMap::Mirror { col, hi } => {
                struct_cost[col] = -c;
                obj_offset += c * hi;
            }
            ColumnMap::Split { pos, neg } => {
                struct_cost[pos] = c;
                struct_cost[neg] = -c;
            }
        }
    }

    let mut rows: Vec<StandardRow> = Vec::with_capacity(lp.n_rows() + bound_rows.len());
    for row in &lp.rows {
        let mut coefs = Vec::with_capacity(row.coefs.len());
        let mut rhs = row.rhs;
        for &(j, a) in &row.coefs {
            match maps[j] {
                ColumnMap::Shift { col, lo } => {
                    coefs.push((col, a));
                    rhs -= a * lo;
                }
                ColumnMap::Mirror { col, hi } => {
                    coefs.push((col, -a));
                    rhs -= a * hi;
                }
                ColumnMap::Split { pos, neg } => {
                    coefs.push((pos, a));
                    coefs.push((neg, -a));
                }
            }
        }
        rows.push(StandardRow {
            coefs,
            sense: row.sense,
            rhs,
            negated: false,
        });
    }
    for &(col, width) in &bound_rows {
        rows.push(StandardRow {
            coefs: vec![(col, 1.0)],
            sense: Sense::Le,
            rhs: width,
            negated: false,
        });
    }
    for row in rows.iter_mut() {
        if row.rhs < 0.0 {
            row.rhs = -row.rhs;
            for c in row.coefs.iter_mut() {
                c.1 = -c.1;
            }
            row.sense = row.sense.flipped();
            row.negated = true;
        }
    }

    // Column layout: structural | slacks | artificials | rhs.
    let m = rows.len();
    let mut slack_col = vec![None; m];
    let mut art_col = vec![None; m];
    let mut n_cols = n_struct;
    for (i, row) in rows.iter().enumerate() {
        if row.sense != Sense::Eq {
            slack_col[i] = Some(n_cols);
            n_cols += 1;
        }
    }
    let first_art = n_cols;
    for (i, row) in rows.iter().enumerate() {
        if row.sense != Sense::Le {
            art_col[i] = Some(n_cols);
            n_cols += 1;
        }
    }
    let width = n_cols + 1;
    let mut data = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    for (i, row) in rows.iter().enumerate() {
        let base = i * width;
        for &(col, a) in &row.coefs {
            data[base + col] += a;
        }
        if let Some(s) = slack_col[i] {
            data[base + s] = if row.sense == Sense::Le { 1.0 } else { -1.0 };
        }
        if let Some(a) = art_col[i] {
            data[base + a] = 1.0;
            basis[i] = a;
        } else {
            basis[i] = slack_col[i].expect("<= rows carry a slack");
        }
        data[base + n_cols] = row.rhs;
    }
    let mut tab = Tableau {
        m,
        width,
        data,
        basis,
        n_cols,
    };
    let mut iterations = 0usize;

    // Phase one.
    if first_art < n_cols {
        let mut cost1 = vec![0.0; n_cols];
        for c in cost1.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        let allowed = vec![true; n_cols];
        iterate(&mut tab, &cost1, &allowed, &mut iterations)?;
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= first_art)
            .map(|i| tab.rhs(i))
            .sum();
        if infeasibility > FEAS_TOL {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, n, lp.n_rows()));
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if tab.basis[i] < first_art {
                continue;
            }
            tab.data[i * width + n_cols] = 0.0;
            let mut best: Option<(usize, f64)> = None;
            for j in 0..first_art {
                let a = tab.at(i, j).abs();
                if a > PIVOT_TOL && best.map_or(true, |(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                let mut scratch = vec![0.0; n_cols];
                tab.pivot(i, j, &mut scratch)?;
            }
        }
    }

    // Phase two.
    let mut cost2 = vec![0.0; n_cols];
    cost2[..n_struct].copy_from_slice(&struct_cost);
    let allowed: Vec<bool> = (0..n_cols).map(|j| j < first_art).collect();
    match iterate(&mut tab, &cost2, &allowed, &mut iterations)? {
        PhaseEnd::Unbounded => {
            return Ok(LpSolution::without_point(LpStatus::Unbounded, n, lp.n_rows()));
        }
        PhaseEnd::Optimal => {}
    }

    let mut xs = vec![0.0; n_cols];
    for i in 0..m {
        xs[tab.basis[i]] = tab.rhs(i).max(0.0);
    }
    let primal: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            ColumnMap::Shift { col, lo } => lo + xs[col],
            ColumnMap::Mirror { col, hi } => hi - xs[col],
            ColumnMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect();
    let objective_value = obj_offset + struct_cost.iter().zip(&xs).map(|(c, x)| c * x).sum::<f64>();

    let reduced = tab.reduced_costs(&cost2);
    let duals: Vec<f64> = (0..lp.n_rows())
        .map(|i| {
            let row = &rows[i];
            let y = match (slack_col[i], row.sense) {
                (Some(s), Sense::Le) => -reduced[s],
                (Some(s), Sense::Ge) => reduced[s],
                _ => -reduced[art_col[i].expect("equality rows carry an artificial")],
            };
            let y = if row.negated { -y } else { y };
            if y == 0.0 {
                0.0
            } else {
                y
            }
        })
        .collect();

    log::trace!("simplex: {} rows, {} cols, {} pivots", m, n_cols, iterations);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value,
        primal,
        duals,
    })
}
