//! Plain-text summaries printed to stdout.

use std::collections::BTreeMap;
use std::fmt::Write;

use steps_core::tree::PartitionTree;
use steps_core::utility::UtilityReport;

use crate::config::Epsilon;
use crate::sweep::SweepReport;

fn join(v: impl IntoIterator<Item = String>) -> String {
    v.into_iter().collect::<Vec<_>>().join(" ")
}

pub fn utility_table(r: &UtilityReport) -> String {
    let mut s = String::new();
    if let Some(k) = &r.specks {
        let per = join(k.per_replicate_ks.iter().map(|x| format!("{x:.4}")));
        writeln!(s, "specks  mean KS {:.4}  per replicate: {per}", k.mean_ks).unwrap();
        if k.converged.iter().any(|c| !c) {
            writeln!(s, "        warning: {} fit(s) hit the iteration cap", k.converged.iter().filter(|c| !**c).count()).unwrap();
        }
    }
    if let Some(l) = &r.l1 {
        let per = join(l.per_replicate.iter().map(|x| x.to_string()));
        writeln!(s, "l1      mean {:.1}  per replicate: {per}", l.mean).unwrap();
    }
    if let Some(c) = &r.chisq {
        writeln!(
            s,
            "chisq   {} pairs tested, {} excluded, {} combining",
            c.pairs.len(),
            c.excluded.len(),
            c.combine_rule
        )
        .unwrap();
        for (a, rate) in c.alphas.iter().zip(&c.rates) {
            writeln!(s, "        alpha {a:<5} consistency {rate:.4}").unwrap();
        }
    }
    s
}

pub fn sweep_table(r: &SweepReport, alphas: &[f64]) -> String {
    let mut s = String::new();
    let Some(first) = r.methods.first() else {
        return s;
    };
    let eps: Vec<String> = first.grid.iter().map(|g| Epsilon(g.epsilon).label()).collect();
    let width = r.methods.iter().map(|m| m.label.len()).max().unwrap_or(6).max(6);
    let row = |s: &mut String, label: &str, cells: Vec<String>, tail: &str| {
        write!(s, "{label:<width$}").unwrap();
        for c in cells {
            write!(s, " {c:>9}").unwrap();
        }
        writeln!(s, "{tail}").unwrap();
    };
    let has = |f: &dyn Fn(&crate::sweep::GridPoint) -> bool| first.grid.iter().any(f);
    if has(&|g| g.mean_ks.is_some()) {
        writeln!(s, "mean SPECKS KS").unwrap();
        row(&mut s, "method", eps.clone(), "       rho   p(decr)");
        for m in &r.methods {
            let cells = m.grid.iter().map(|g| g.mean_ks.map_or("-".into(), |x| format!("{x:.4}"))).collect();
            let tail = m.ks_trend.map_or(String::new(), |t| format!(" {:>9.3} {:>9.2e}", t.rho, t.p_decreasing));
            row(&mut s, &m.label, cells, &tail);
        }
    }
    if has(&|g| g.mean_l1.is_some()) {
        writeln!(s, "mean l1").unwrap();
        row(&mut s, "method", eps.clone(), "");
        for m in &r.methods {
            let cells = m.grid.iter().map(|g| g.mean_l1.map_or("-".into(), |x| format!("{x:.1}"))).collect();
            row(&mut s, &m.label, cells, "");
        }
    }
    if has(&|g| g.mean_chisq_rates.is_some()) {
        for (k, a) in alphas.iter().enumerate() {
            writeln!(s, "chi-squared consistency, alpha {a}").unwrap();
            row(&mut s, "method", eps.clone(), "");
            for m in &r.methods {
                let cells = m
                    .grid
                    .iter()
                    .map(|g| g.mean_chisq_rates.as_ref().map_or("-".into(), |r| format!("{:.4}", r[k])))
                    .collect();
                row(&mut s, &m.label, cells, "");
            }
        }
    }
    s
}

pub fn tree_summary(tree: &PartitionTree) -> String {
    let names = tree.schema().names();
    let mut s = String::new();
    writeln!(
        s,
        "partition layers {}, branching {}, leaf width {}, leaf cells {}",
        tree.layers(),
        tree.branching(),
        tree.leaf_width(),
        tree.leaf_cell_count()
    )
    .unwrap();
    for l in 0..=tree.layers() {
        let ids = tree.layer(l);
        let mut elected: BTreeMap<&str, usize> = BTreeMap::new();
        let mut phantoms = 0;
        for id in ids.clone() {
            let node = tree.node(id);
            if let Some(split) = &node.split {
                *elected.entry(names[split.attribute]).or_default() += 1;
            }
            phantoms += node.phantom_children;
        }
        let elected = join(elected.into_iter().map(|(a, n)| format!("{a} ({n})")));
        writeln!(
            s,
            "layer {l}: {} nodes{}{}",
            ids.len(),
            if elected.is_empty() { String::new() } else { format!(", splits {elected}") },
            if phantoms > 0 { format!(", {phantoms} phantom children") } else { String::new() }
        )
        .unwrap();
    }
    s
}
