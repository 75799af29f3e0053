//! Three one-parameter indexings of the loop orders: lexicographic, reverse
//! lexicographic (innermost loop varies slowest) and position along the
//! Steinhaus-Johnson-Trotter Hamiltonian path of the permutohedron.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::conv::Permutation;
use crate::error::{Error, Result};

/// Number of loop orders of the six-deep nest.
pub const PERM_COUNT: usize = 720;

/// Largest `n` accepted by the generic enumeration functions.
pub const MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexScheme {
    Lex,
    RevLex,
    Hamiltonian,
}

impl IndexScheme {
    pub const ALL: [IndexScheme; 3] = [IndexScheme::Lex, IndexScheme::RevLex, IndexScheme::Hamiltonian];
}

impl fmt::Display for IndexScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexScheme::Lex => "lex",
            IndexScheme::RevLex => "revlex",
            IndexScheme::Hamiltonian => "hamiltonian",
        })
    }
}

impl FromStr for IndexScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lex" => Ok(IndexScheme::Lex),
            "revlex" => Ok(IndexScheme::RevLex),
            "hamiltonian" | "ham" | "sjt" => Ok(IndexScheme::Hamiltonian),
            _ => Err(Error::Parse(format!("unknown index scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PermIndex {
    pub value: usize,
    pub scheme: IndexScheme,
}

impl PermIndex {
    pub fn new(value: usize, scheme: IndexScheme) -> Result<Self> {
        if value >= PERM_COUNT {
            return Err(Error::Domain(format!(
                "permutation index {value} outside 0..{PERM_COUNT}"
            )));
        }
        Ok(PermIndex { value, scheme })
    }
}

fn check_n(n: usize) -> Result<()> {
    if !(1..=MAX_N).contains(&n) {
        return Err(Error::Domain(format!("n must be in 1..={MAX_N}, got {n}")));
    }
    Ok(())
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// All permutations of `0..n` along the Steinhaus-Johnson-Trotter path,
/// starting from the identity. Consecutive entries differ by one swap of
/// adjacent positions.
pub fn sjt_path(n: usize) -> Result<Vec<Vec<usize>>> {
    check_n(n)?;
    // Even's formulation: every value carries a direction; the largest
    // mobile value swaps with its neighbour, then every larger value turns.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut pos: Vec<usize> = (0..n).collect();
    let mut left = vec![true; n];
    let mut path = Vec::with_capacity(factorial(n));
    path.push(perm.clone());

    loop {
        let mobile = (0..n).rev().find(|&v| {
            let p = pos[v];
            if left[v] {
                p > 0 && perm[p - 1] < v
            } else {
                p + 1 < n && perm[p + 1] < v
            }
        });
        let Some(v) = mobile else { break };
        let p = pos[v];
        let q = if left[v] { p - 1 } else { p + 1 };
        let w = perm[q];
        perm.swap(p, q);
        pos[v] = q;
        pos[w] = p;
        for dir in &mut left[v + 1..n] {
            *dir = !*dir;
        }
        path.push(perm.clone());
    }
    Ok(path)
}

/// Rank of `perm` (a permutation of `0..n`) in lexicographic order.
pub fn lex_rank(perm: &[usize]) -> Result<usize> {
    let n = perm.len();
    check_n(n)?;
    let mut used = vec![false; n];
    let mut rank = 0;
    for (k, &v) in perm.iter().enumerate() {
        if v >= n || used[v] {
            return Err(Error::Domain(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        let smaller_unused = (0..v).filter(|&u| !used[u]).count();
        rank += smaller_unused * factorial(n - 1 - k);
        used[v] = true;
    }
    Ok(rank)
}

/// Inverse of [`lex_rank`].
pub fn lex_unrank(n: usize, rank: usize) -> Result<Vec<usize>> {
    check_n(n)?;
    if rank >= factorial(n) {
        return Err(Error::Domain(format!("rank {rank} outside 0..{}", factorial(n))));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut rest = rank;
    let mut out = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let f = factorial(k);
        out.push(pool.remove(rest / f));
        rest %= f;
    }
    Ok(out)
}

struct HamiltonianTable {
    by_ham: Vec<Permutation>,
    ham_of_lex: Vec<usize>,
}

fn hamiltonian_table() -> &'static HamiltonianTable {
    static TABLE: OnceLock<HamiltonianTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let path = sjt_path(6).expect("n = 6 is in range");
        let mut ham_of_lex = vec![0; PERM_COUNT];
        let by_ham = path
            .iter()
            .enumerate()
            .map(|(h, p)| {
                ham_of_lex[lex_rank(p).expect("valid permutation")] = h;
                Permutation::from_ordinals(p).expect("valid permutation")
            })
            .collect();
        HamiltonianTable { by_ham, ham_of_lex }
    })
}

pub fn index_of(perm: Permutation, scheme: IndexScheme) -> PermIndex {
    let ordinals = perm.ordinals();
    let value = match scheme {
        IndexScheme::Lex => lex_rank(&ordinals).expect("permutations are always valid"),
        IndexScheme::RevLex => {
            let mut rev = ordinals;
            rev.reverse();
            lex_rank(&rev).expect("permutations are always valid")
        }
        IndexScheme::Hamiltonian => hamiltonian_table().ham_of_lex[lex_rank(&ordinals).expect("valid")],
    };
    PermIndex { value, scheme }
}

pub fn perm_of(idx: PermIndex) -> Result<Permutation> {
    let idx = PermIndex::new(idx.value, idx.scheme)?;
    match idx.scheme {
        IndexScheme::Lex => Permutation::from_ordinals(&lex_unrank(6, idx.value)?),
        IndexScheme::RevLex => {
            let mut ord = lex_unrank(6, idx.value)?;
            ord.reverse();
            Permutation::from_ordinals(&ord)
        }
        IndexScheme::Hamiltonian => Ok(hamiltonian_table().by_ham[idx.value]),
    }
}

pub fn lex_index(perm: Permutation) -> usize {
    index_of(perm, IndexScheme::Lex).value
}

pub fn ham_index(perm: Permutation) -> usize {
    index_of(perm, IndexScheme::Hamiltonian).value
}

pub fn perm_from_lex(lex: usize) -> Result<Permutation> {
    perm_of(PermIndex::new(lex, IndexScheme::Lex)?)
}

/// All 720 loop orders in lexicographic order.
pub fn all_permutations() -> Vec<Permutation> {
    (0..PERM_COUNT).map(|k| perm_from_lex(k).expect("in range")).collect()
}

/// One row of the index table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRow {
    pub lex: usize,
    pub revlex: usize,
    pub hamiltonian: usize,
    pub order: String,
}

/// The full index table, one row per loop order in lexicographic order.
pub fn index_table() -> Vec<IndexRow> {
    all_permutations()
        .into_iter()
        .map(|p| IndexRow {
            lex: lex_index(p),
            revlex: index_of(p, IndexScheme::RevLex).value,
            hamiltonian: ham_index(p),
            order: p.to_string(),
        })
        .collect()
}
