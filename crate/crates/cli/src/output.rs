use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Shortest round-trip scientific form, so rows are byte-stable and exact.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pretty JSON with a trailing newline; keys are sorted.
pub fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Columns drawn by the plotting script: `(x, ys, log_x, log_y)`.
fn plot_axes(table: &str) -> (&'static str, &'static [&'static str], bool, bool) {
    match table {
        "resolve" => ("x", &["abs_u"], false, true),
        "sweep" => ("inv_h", &["exterior_upper", "full_upper"], false, true),
        "carleman" => ("h", &["log_ratio", "log_c"], true, false),
        "resonances" | "strip_blocking" => ("re", &["im"], false, false),
        "strip" => ("theta0", &["certified"], false, false),
        "evolve" => ("t", &["value", "coarse"], false, true),
        _ => ("quantity", &["value"], false, false),
    }
}

/// A matplotlib script that plots each CSV written by the run.
pub fn plot_script(tables: &[&str]) -> String {
    let mut s = String::from(
        "#!/usr/bin/env python3\n\
         import csv\n\
         import os\n\
         import sys\n\
         \n\
         import matplotlib\n\
         matplotlib.use(\"Agg\")\n\
         import matplotlib.pyplot as plt\n\
         \n\
         HERE = os.path.dirname(os.path.abspath(__file__))\n\
         \n\
         \n\
         def column(rows, name):\n\
         \x20   out = []\n\
         \x20   for r in rows:\n\
         \x20       v = r.get(name, \"\")\n\
         \x20       out.append(float(v) if v not in (\"\", \"true\", \"false\") else float(v == \"true\"))\n\
         \x20   return out\n\
         \n\
         \n\
         def plot(name, x, ys, logx, logy):\n\
         \x20   with open(os.path.join(HERE, name + \".csv\")) as f:\n\
         \x20       rows = list(csv.DictReader(f))\n\
         \x20   if not rows or x not in rows[0]:\n\
         \x20       return\n\
         \x20   fig, ax = plt.subplots()\n\
         \x20   for y in ys:\n\
         \x20       ax.plot(column(rows, x), column(rows, y), \"o-\", label=y)\n\
         \x20   ax.set_xlabel(x)\n\
         \x20   if logx:\n\
         \x20       ax.set_xscale(\"log\")\n\
         \x20   if logy:\n\
         \x20       ax.set_yscale(\"log\")\n\
         \x20   ax.legend()\n\
         \x20   ax.set_title(name)\n\
         \x20   fig.savefig(os.path.join(HERE, name + \".png\"), dpi=150)\n\
         \n\
         \n\
         if __name__ == \"__main__\":\n",
    );
    for t in tables {
        let (x, ys, lx, ly) = plot_axes(t);
        let ys: Vec<String> = ys.iter().map(|y| format!("\"{y}\"")).collect();
        let py = |b: bool| if b { "True" } else { "False" };
        writeln!(s, "    plot(\"{t}\", \"{x}\", [{}], {}, {})", ys.join(", "), py(lx), py(ly)).unwrap();
    }
    s.push_str("    sys.exit(0)\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_lowercase_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -1.0, 0.1, 1e-300, 3.297_001_2, f64::MAX] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
