//! Mock youth-voter data: a 15-attribute categorical schema and a seeded
//! generator with strong dependencies and a dominant, skewed income
//! marginal.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dataset::{Attribute, CategoricalDataset, Schema};
use crate::dp::{NoiseSource, NoiseStream, StreamId};

/// Record count of the mock dataset used for the ε-sweeps.
pub const VOTER_N: usize = 44_821;

const CHUNK: usize = 1024;

const YES_NO: [&str; 2] = ["0", "1"];

pub fn voter_schema() -> Schema {
    let levels = |lo: u32, hi: u32| (lo..=hi).map(|v| v.to_string()).collect::<Vec<_>>();
    Schema::new(vec![
        Attribute::new("voted", YES_NO),
        Attribute::new("prereg_state", YES_NO),
        Attribute::new("age", levels(18, 22)),
        Attribute::new("married", YES_NO),
        Attribute::new("female", YES_NO),
        Attribute::new("family_income", levels(1, 14)),
        Attribute::new("college_degree", YES_NO),
        Attribute::new("white", YES_NO),
        Attribute::new("hispanic", YES_NO),
        Attribute::new("registered", YES_NO),
        Attribute::new("metro_area", YES_NO),
        Attribute::new("residence_length", levels(1, 6)),
        Attribute::new("business_farm", YES_NO),
        Attribute::new("in_person", YES_NO),
        Attribute::new("dmv_registration", YES_NO),
    ])
    .expect("static schema is valid")
}

/// Column positions in [`voter_schema`].
mod col {
    pub const VOTED: usize = 0;
    pub const PREREG: usize = 1;
    pub const AGE: usize = 2;
    pub const MARRIED: usize = 3;
    pub const FEMALE: usize = 4;
    pub const INCOME: usize = 5;
    pub const COLLEGE: usize = 6;
    pub const WHITE: usize = 7;
    pub const HISPANIC: usize = 8;
    pub const REGISTERED: usize = 9;
    pub const METRO: usize = 10;
    pub const RESIDENCE: usize = 11;
    pub const BUSINESS: usize = 12;
    pub const IN_PERSON: usize = 13;
    pub const DMV: usize = 14;
}

fn bern(s: &mut NoiseStream, p: f64) -> u32 {
    u32::from(s.uniform() < p)
}

fn categorical(s: &mut NoiseStream, w: &[f64]) -> u32 {
    let total: f64 = w.iter().sum();
    let mut t = s.uniform() * total;
    for (i, &x) in w.iter().enumerate() {
        if t < x {
            return i as u32;
        }
        t -= x;
    }
    (w.len() - 1) as u32
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn voter_record(s: &mut NoiseStream, r: &mut [u32]) {
    use col::*;
    let income_w: Vec<f64> = (0..14).map(|k| 0.6f64.powi(k)).collect();
    let income = categorical(s, &income_w);
    let inc = f64::from(income) / 13.0;
    let age = categorical(s, &[0.3, 0.25, 0.2, 0.15, 0.1]);
    let a = f64::from(age) / 4.0;
    let female = bern(s, 0.52);
    let married = bern(s, logistic(-3.0 + 2.5 * a - 1.5 * inc));
    let college = bern(s, logistic(-3.5 + 3.0 * a + 3.0 * inc));
    let white = bern(s, logistic(0.2 + 2.5 * inc));
    let hispanic = if white == 1 { bern(s, 0.08) } else { bern(s, 0.4) };
    let metro = bern(s, logistic(0.8 + 1.5 * inc));
    let registered = bern(s, logistic(-0.3 + 1.5 * f64::from(college) + 2.0 * inc + 0.5 * a));
    let prereg = if registered == 1 {
        bern(s, logistic(-1.5 + 1.5 * (1.0 - a)))
    } else {
        bern(s, 0.01)
    };
    let voted = if registered == 1 {
        bern(s, logistic(-0.5 + 1.2 * f64::from(college) + 1.5 * inc))
    } else {
        0
    };
    let res_w: Vec<f64> = if married == 1 {
        vec![0.1, 0.2, 0.3, 0.2, 0.1, 0.1]
    } else {
        vec![0.45, 0.25, 0.12, 0.08, 0.06, 0.04]
    };
    let residence = categorical(s, &res_w);
    let business = bern(s, if metro == 1 { 0.02 } else { 0.12 });
    let in_person = bern(s, logistic(-0.2 - 0.8 * f64::from(metro)));
    let dmv = if registered == 1 { bern(s, 0.35) } else { 0 };

    r[VOTED] = voted;
    r[PREREG] = prereg;
    r[AGE] = age;
    r[MARRIED] = married;
    r[FEMALE] = female;
    r[INCOME] = income;
    r[COLLEGE] = college;
    r[WHITE] = white;
    r[HISPANIC] = hispanic;
    r[REGISTERED] = registered;
    r[METRO] = metro;
    r[RESIDENCE] = residence;
    r[BUSINESS] = business;
    r[IN_PERSON] = in_person;
    r[DMV] = dmv;
}

/// `n` records on [`voter_schema`]; identical for identical `(n, seed)`
/// regardless of thread count.
pub fn voter_mock(n: usize, seed: u64) -> CategoricalDataset {
    let schema = Arc::new(voter_schema());
    let p = schema.len();
    let src = NoiseSource::new(seed, StreamId::root().tagged("mock-voter"));
    let mut levels = vec![0u32; n * p];
    levels.par_chunks_mut(CHUNK * p).enumerate().for_each(|(c, chunk)| {
        let mut s = src.child(c as u64).stream();
        for r in chunk.chunks_exact_mut(p) {
            voter_record(&mut s, r);
        }
    });
    CategoricalDataset::from_flat(schema, levels).expect("generated levels are in range")
}

/// `n` records drawn uniformly over every cell of `schema`.
pub fn uniform_mock(schema: Arc<Schema>, n: usize, seed: u64) -> CategoricalDataset {
    let p = schema.len();
    let cards: Vec<u64> = schema.cardinalities().iter().map(|&k| k as u64).collect();
    let src = NoiseSource::new(seed, StreamId::root().tagged("mock-uniform"));
    let mut levels = vec![0u32; n * p];
    levels.par_chunks_mut(CHUNK * p.max(1)).enumerate().for_each(|(c, chunk)| {
        let mut s = src.child(c as u64).stream();
        for r in chunk.chunks_exact_mut(p) {
            for (v, &k) in r.iter_mut().zip(&cards) {
                *v = s.below(k) as u32;
            }
        }
    });
    CategoricalDataset::from_flat(schema, levels).expect("generated levels are in range")
}
