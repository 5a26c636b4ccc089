//! Reference implementations used by the acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::NaiveDate;
use mobility_panel::panel::{Role, WeeklyPanel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn anchor() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 5, 4).unwrap()
}

/// Print a criterion line and return whether it passed.
pub fn verdict(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

// ---------------------------------------------------------------- LSDV

pub struct Lsdv {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
}

/// OLS of `y` on `x` plus one dummy per entity, solved by QR.
pub fn lsdv(x: &[Vec<f64>], y: &[f64], entity: &[usize]) -> Lsdv {
    let n = y.len();
    let k = x[0].len();
    let mut ids: Vec<usize> = entity.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let pos: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let p = k + ids.len();
    let mut a = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..k {
            a[(i, j)] = x[i][j];
        }
        a[(i, k + pos[&entity[i]])] = 1.0;
    }
    let b = DVector::from_column_slice(y);
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * &b;
    let coef = qr.r().solve_upper_triangular(&qtb).expect("full-rank dummy design");
    let resid = &b - &a * &coef;
    let sigma2 = resid.norm_squared() / (n - p) as f64;
    let r_inv = qr.r().try_inverse().expect("invertible R");
    let cov = &r_inv * r_inv.transpose() * sigma2;
    Lsdv {
        beta: (0..k).map(|j| coef[j]).collect(),
        se: (0..k).map(|j| cov[(j, j)].sqrt()).collect(),
    }
}

/// Panel with `y` and regressors `x1..x{k}` (read at `t - 1` by a lag-1 spec)
/// and cells blanked with probability `missing`.
pub fn random_fe_panel(seed: u64, entities: usize, weeks: usize, k: usize, missing: f64) -> WeeklyPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = (0..entities).map(|e| format!("e{e:02}")).collect();
    let mut panel = WeeklyPanel::new(ids, anchor(), weeks).unwrap();
    let beta = [1.0, -0.5, 0.25, 0.8, -1.2];
    let mut xs: Vec<Vec<Option<f64>>> = vec![Vec::new(); k];
    let mut y = Vec::new();
    for _ in 0..entities {
        let alpha: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
        let mut prev = vec![0.0; k];
        for _ in 0..weeks {
            let mut yt = alpha + rng.sample::<f64, _>(StandardNormal);
            for j in 0..k {
                yt += beta[j % beta.len()] * prev[j];
            }
            y.push((rng.random::<f64>() >= missing).then_some(yt));
            for j in 0..k {
                prev[j] = alpha * 0.3 + rng.sample::<f64, _>(StandardNormal);
                xs[j].push((rng.random::<f64>() >= missing).then_some(prev[j]));
            }
        }
    }
    panel.insert("y", Role::Derived, y).unwrap();
    for (j, col) in xs.into_iter().enumerate() {
        panel.insert(format!("x{}", j + 1), Role::Mobility, col).unwrap();
    }
    panel
}

/// Complete-case rows of `y_t` on `x_{t-1}` read straight from the panel cells.
pub fn lag_one_rows(panel: &WeeklyPanel, k: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<usize>) {
    let (mut x, mut y, mut ent) = (Vec::new(), Vec::new(), Vec::new());
    for e in 0..panel.entity_count() {
        for t in 2..=panel.week_count() {
            let Some(yt) = panel.get("y", e, t).unwrap() else { continue };
            let row: Option<Vec<f64>> = (1..=k).map(|j| panel.get(&format!("x{j}"), e, t - 1).unwrap()).collect();
            if let Some(row) = row {
                x.push(row);
                y.push(yt);
                ent.push(e);
            }
        }
    }
    (x, y, ent)
}

/// AR(1) panel `y = α + φ y_{-1} + ε`, started at each entity's mean.
pub fn ar1_panel(seed: u64, entities: usize, weeks: usize, phi: f64) -> WeeklyPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = (0..entities).map(|e| format!("e{e:03}")).collect();
    let mut panel = WeeklyPanel::new(ids, anchor(), weeks).unwrap();
    let mut y = Vec::with_capacity(entities * weeks);
    for _ in 0..entities {
        let alpha: f64 = StandardNormal.sample(&mut rng);
        let mut prev = alpha / (1.0 - phi);
        for _ in 0..weeks {
            let eps: f64 = StandardNormal.sample(&mut rng);
            prev = alpha + phi * prev + eps;
            y.push(Some(prev));
        }
    }
    panel.insert("y", Role::Derived, y).unwrap();
    panel
}

// ------------------------------------------------------------ backdoor

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Kind {
    Observed,
    Latent,
    Deterministic,
}

/// Plain adjacency description of a graph file.
pub struct Graph {
    pub names: Vec<String>,
    pub kinds: Vec<Kind>,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn parse(text: &str) -> Graph {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut raw_edges = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap().trim();
            let w: Vec<&str> = line.split_whitespace().collect();
            match w.as_slice() {
                [] => {}
                ["node", n] => {
                    names.push(n.to_string());
                    kinds.push(Kind::Observed);
                }
                ["node", n, "latent"] => {
                    names.push(n.to_string());
                    kinds.push(Kind::Latent);
                }
                ["node", n, "deterministic"] => {
                    names.push(n.to_string());
                    kinds.push(Kind::Deterministic);
                }
                ["edge", a, b] => raw_edges.push((a.to_string(), b.to_string())),
                _ => panic!("bad line {line}"),
            }
        }
        let idx = |n: &str| names.iter().position(|m| m == n).unwrap();
        let edges = raw_edges.iter().map(|(a, b)| (idx(a), idx(b))).collect();
        Graph { names, kinds, edges }
    }

    fn parents(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    /// `desc[v][w]`: w is reachable from v (v included).
    pub fn descendants(&self) -> Vec<Vec<bool>> {
        let n = self.names.len();
        let mut d = vec![vec![false; n]; n];
        for v in 0..n {
            let mut stack = vec![v];
            while let Some(u) = stack.pop() {
                if d[v][u] {
                    continue;
                }
                d[v][u] = true;
                stack.extend(self.edges.iter().filter(|e| e.0 == u).map(|e| e.1));
            }
        }
        d
    }

    pub fn closure(&self, set: &[bool], x: usize, y: usize) -> Vec<bool> {
        let mut c = set.to_vec();
        loop {
            let add: Vec<usize> = (0..c.len())
                .filter(|&v| !c[v] && v != x && v != y && self.kinds[v] == Kind::Deterministic)
                .filter(|&v| self.parents(v).iter().all(|p| c[*p]))
                .collect();
            if add.is_empty() {
                return c;
            }
            for v in add {
                c[v] = true;
            }
        }
    }

    /// Every simple undirected path from x to y whose first edge points into x.
    fn backdoor_paths(&self, x: usize, y: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut path = vec![x];
        for p in self.parents(x) {
            self.extend(p, y, &mut path, &mut out);
        }
        out
    }

    fn extend(&self, v: usize, y: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if path.contains(&v) {
            return;
        }
        path.push(v);
        if v == y {
            out.push(path.clone());
        } else {
            for w in 0..self.names.len() {
                if self.has_edge(v, w) || self.has_edge(w, v) {
                    self.extend(w, y, path, out);
                }
            }
        }
        path.pop();
    }

    fn path_blocked(&self, path: &[usize], cond: &[bool], desc: &[Vec<bool>]) -> bool {
        (1..path.len() - 1).any(|i| {
            let (a, v, b) = (path[i - 1], path[i], path[i + 1]);
            let collider = self.has_edge(a, v) && self.has_edge(b, v);
            if collider {
                !(0..cond.len()).any(|z| cond[z] && desc[v][z])
            } else {
                cond[v]
            }
        })
    }

    fn blocks_all(&self, paths: &[Vec<usize>], cond: &[bool], desc: &[Vec<bool>]) -> bool {
        paths.iter().all(|p| self.path_blocked(p, cond, desc))
    }

    pub fn index(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).unwrap()
    }

    /// Nodes at or below a collider of some backdoor path from x to y.
    pub fn collider_zone(&self, x: usize, y: usize) -> Vec<bool> {
        let desc = self.descendants();
        let mut zone = vec![false; self.names.len()];
        for path in self.backdoor_paths(x, y) {
            for i in 1..path.len() - 1 {
                let (a, v, b) = (path[i - 1], path[i], path[i + 1]);
                if self.has_edge(a, v) && self.has_edge(b, v) {
                    for (w, below) in desc[v].iter().enumerate() {
                        zone[w] |= below;
                    }
                }
            }
        }
        zone
    }

    /// Minimal valid backdoor sets by brute force over all subsets, as
    /// `(names, needs_closure)`, ordered by size then by name positions.
    pub fn minimal_backdoor_sets(&self, x: &str, y: &str) -> Vec<(Vec<String>, bool)> {
        let ix = self.names.iter().position(|n| n == x).unwrap();
        let iy = self.names.iter().position(|n| n == y).unwrap();
        let desc = self.descendants();
        let mut pool: Vec<usize> = (0..self.names.len())
            .filter(|&v| v != ix && v != iy && self.kinds[v] == Kind::Observed && !desc[ix][v])
            .collect();
        pool.sort_by(|a, b| self.names[*a].cmp(&self.names[*b]));
        let paths = self.backdoor_paths(ix, iy);
        let n = self.names.len();
        let mut valid: Vec<(Vec<usize>, bool)> = Vec::new();
        for mask in 0u32..(1 << pool.len()) {
            let members: Vec<usize> = (0..pool.len()).filter(|i| mask >> i & 1 == 1).collect();
            let mut set = vec![false; n];
            for i in &members {
                set[pool[*i]] = true;
            }
            let cond = self.closure(&set, ix, iy);
            if self.blocks_all(&paths, &cond, &desc) {
                valid.push((members, !self.blocks_all(&paths, &set, &desc)));
            }
        }
        let is_subset = |a: &[usize], b: &[usize]| a.iter().all(|v| b.contains(v));
        let mut minimal: Vec<(Vec<usize>, bool)> = valid
            .iter()
            .filter(|(s, _)| !valid.iter().any(|(t, _)| t.len() < s.len() && is_subset(t, s)))
            .cloned()
            .collect();
        minimal.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
        minimal
            .into_iter()
            .map(|(s, flag)| (s.iter().map(|i| self.names[pool[*i]].clone()).collect(), flag))
            .collect()
    }
}

/// Random graph file over X, Y and up to `extra` more nodes.
pub fn random_dag_text(rng: &mut ChaCha8Rng, extra: usize) -> String {
    let others = rng.random_range(0..=extra);
    let mut names: Vec<String> = vec!["X".into(), "Y".into()];
    names.extend((0..others).map(|i| format!("N{i}")));
    // random topological order
    for i in (1..names.len()).rev() {
        let j = rng.random_range(0..=i);
        names.swap(i, j);
    }
    let density = rng.random_range(0.2..0.7);
    let mut text = String::new();
    for n in &names {
        let kind = if n == "X" || n == "Y" {
            ""
        } else {
            match rng.random_range(0..10) {
                0 | 1 => " latent",
                2 | 3 => " deterministic",
                _ => "",
            }
        };
        text.push_str(&format!("node {n}{kind}\n"));
    }
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            if rng.random::<f64>() < density {
                text.push_str(&format!("edge {} {}\n", names[i], names[j]));
            }
        }
    }
    text
}

// ----------------------------------------------------------- soft index

/// Term lists of the four categories, as published.
pub const COVID: &[&str] = &[
    "covid", "pandemia", "coronavirus", "covid-19", "mortes covid", "morrer de covid",
    "covid o que fazer", "covid como proceder", "pegar covid", "transmissão covid", "covid mata",
    "covid contagioso", "covid transmite", "contagio covid", "sintomas covid", "morte de covid",
    "casos covid",
];
pub const FAKENEWS: &[&str] = &[
    "kit-covid", "hidroxicloroquina", "cloroquina", "azitromicina", "gripezinha", "ivermectina",
    "remedio covid", "tratamento covid",
];
pub const VACCINES: &[&str] = &[
    "vacinação covid", "vacinas covid", "pfizer", "astrazeneca", "janssen", "butantan",
    "coronavac", "moderna", "biontech", "oxford", "fiocruz", "sputnik v",
];
pub const PREVENTION: &[&str] = &[
    "mascara", "lavas as mãos", "alcool em gel", "isolamento", "distanciamento", "quarentena",
    "lockdown", "confinamento", "ficar em casa", "toque de recolher", "toque de restrição",
    "restrições", "circulação",
];
