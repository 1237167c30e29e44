//! Line-oriented text format for fitted models. Floats are written with
//! their shortest round-trip representation, so a save/load cycle is exact.
//!
//! ```text
//! cholcast-gbt 1
//! n_features 3
//! base_score 0.5
//! params n_rounds=100 eta=0.1 ...
//! trees 100
//! tree 3
//! split 0 2.5 1.75 1 2
//! leaf -0.1
//! leaf 0.1
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{GbtModel, GbtParams, Node, Tree};

const MAGIC: &str = "cholcast-gbt 1";

impl GbtModel {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "n_features {}", self.n_features);
        let _ = writeln!(s, "base_score {}", self.base_score);
        let _ = writeln!(
            s,
            "params n_rounds={} eta={} max_depth={} min_child_weight={} lambda={} gamma={} subsample={} colsample={} seed={}",
            p.n_rounds, p.eta, p.max_depth, p.min_child_weight, p.lambda, p.gamma, p.subsample, p.colsample, p.seed
        );
        let _ = writeln!(s, "trees {}", self.trees.len());
        for t in &self.trees {
            let _ = writeln!(s, "tree {}", t.nodes.len());
            for n in &t.nodes {
                match *n {
                    Node::Split {
                        feature,
                        threshold,
                        gain,
                        left,
                        right,
                    } => {
                        let _ = writeln!(s, "split {feature} {threshold} {gain} {left} {right}");
                    }
                    Node::Leaf { weight } => {
                        let _ = writeln!(s, "leaf {weight}");
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<GbtModel> {
        let mut r = Reader {
            lines: text.lines().enumerate(),
            line: 0,
        };
        if r.next()? != MAGIC {
            return Err(r.err("unrecognised header"));
        }
        let n_features: usize = r.keyed("n_features")?;
        let base_score: f64 = r.keyed("base_score")?;
        let params = r.params()?;
        let n_trees: usize = r.keyed("trees")?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes: usize = r.keyed("tree")?;
            if n_nodes == 0 {
                return Err(r.err("empty tree"));
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            for i in 0..n_nodes {
                let line = r.next()?;
                let mut f = line.split_ascii_whitespace();
                let node = match f.next() {
                    Some("leaf") => Node::Leaf {
                        weight: r.field(f.next())?,
                    },
                    Some("split") => {
                        let node = Node::Split {
                            feature: r.field(f.next())?,
                            threshold: r.field(f.next())?,
                            gain: r.field(f.next())?,
                            left: r.field(f.next())?,
                            right: r.field(f.next())?,
                        };
                        if let Node::Split {
                            feature, left, right, ..
                        } = node
                        {
                            if feature >= n_features || left <= i || right <= i || left >= n_nodes || right >= n_nodes
                            {
                                return Err(r.err("split refers outside the tree"));
                            }
                        }
                        node
                    }
                    _ => return Err(r.err("expected `leaf` or `split`")),
                };
                if f.next().is_some() {
                    return Err(r.err("trailing fields"));
                }
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        if r.lines.any(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::ModelFormat {
                line: r.line + 1,
                message: "trailing content".into(),
            });
        }
        Ok(GbtModel {
            params,
            base_score,
            n_features,
            trees,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<GbtModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GbtModel::from_text(&text)
    }
}

struct Reader<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: I,
    line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Reader<'a, I> {
    fn err(&self, message: &str) -> Error {
        Error::ModelFormat {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim())
            }
            None => Err(Error::ModelFormat {
                line: self.line + 1,
                message: "unexpected end of file".into(),
            }),
        }
    }

    fn field<T: FromStr>(&self, s: Option<&str>) -> Result<T> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| self.err("missing or malformed field"))
    }

    fn keyed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.next()?;
        let mut f = line.split_ascii_whitespace();
        if f.next() != Some(key) {
            return Err(self.err(&format!("expected `{key}`")));
        }
        let v = self.field(f.next())?;
        if f.next().is_some() {
            return Err(self.err("trailing fields"));
        }
        Ok(v)
    }

    fn params(&mut self) -> Result<GbtParams> {
        let line = self.next()?;
        let mut f = line.split_ascii_whitespace();
        if f.next() != Some("params") {
            return Err(self.err("expected `params`"));
        }
        let mut p = GbtParams::default();
        let mut seen = 0;
        for kv in f {
            let (k, v) = kv.split_once('=').ok_or_else(|| self.err("expected key=value"))?;
            let v = Some(v);
            match k {
                "n_rounds" => p.n_rounds = self.field(v)?,
                "eta" => p.eta = self.field(v)?,
                "max_depth" => p.max_depth = self.field(v)?,
                "min_child_weight" => p.min_child_weight = self.field(v)?,
                "lambda" => p.lambda = self.field(v)?,
                "gamma" => p.gamma = self.field(v)?,
                "subsample" => p.subsample = self.field(v)?,
                "colsample" => p.colsample = self.field(v)?,
                "seed" => p.seed = self.field(v)?,
                _ => return Err(self.err(&format!("unknown parameter `{k}`"))),
            }
            seen += 1;
        }
        if seen != 9 {
            return Err(self.err("incomplete params"));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 120;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] * 3.1 + cols[2][i].powi(2)).collect();
        let x = DenseMatrix::from_columns(n, cols);
        let m = GbtModel::fit(
            &x,
            &y,
            &GbtParams {
                n_rounds: 20,
                seed: 9,
                ..GbtParams::default()
            },
        )
        .unwrap();
        let back = GbtModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        let a = m.predict(&x).unwrap();
        let b = back.predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            GbtModel::from_text("nonsense"),
            Err(Error::ModelFormat { line: 1, .. })
        ));
        let m = GbtModel {
            params: GbtParams::default(),
            base_score: 1.0,
            n_features: 1,
            trees: vec![Tree {
                nodes: vec![Node::Leaf { weight: 0.5 }],
            }],
        };
        let text = m.to_text().replace("leaf 0.5", "leaf x");
        assert!(matches!(
            GbtModel::from_text(&text),
            Err(Error::ModelFormat { line: 7, .. })
        ));
    }
}
