//! DC power transfer distribution factors, computed island by island.

use nalgebra::DMatrix;

use super::PowerNetwork;
use crate::error::{Error, Result};

/// Sensitivities of line flows to bus injections, with the injection
/// withdrawn at the slack bus of the bus's island. Failed lines and buses
/// are left out of the topology; their rows and columns are zero, as are
/// all entries pairing a line with a bus of another island.
#[derive(Debug, Clone, PartialEq)]
pub struct Ptdf {
    lines: usize,
    buses: usize,
    factors: Vec<f64>,
    /// Island of each bus, `None` for failed buses.
    pub island_of: Vec<Option<usize>>,
    /// Island of each in-service line.
    pub line_island: Vec<Option<usize>>,
    pub islands: Vec<Vec<usize>>,
    pub slack: Vec<usize>,
}

impl Ptdf {
    #[inline]
    pub fn get(&self, line: usize, bus: usize) -> f64 {
        self.factors[line * self.buses + bus]
    }

    pub fn row(&self, line: usize) -> &[f64] {
        &self.factors[line * self.buses..(line + 1) * self.buses]
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// Line flows for a vector of net bus injections.
    pub fn flows(&self, injection: &[f64]) -> Vec<f64> {
        (0..self.lines)
            .map(|l| self.row(l).iter().zip(injection).map(|(f, q)| f * q).sum())
            .collect()
    }
}

/// Builds the PTDF after removing failed lines and buses (and every line
/// touching a failed bus). Each island's slack is its first bus with
/// generating capacity, or its first bus when it has none.
pub fn compute_ptdf(
    net: &PowerNetwork,
    failed_lines: &[bool],
    failed_buses: &[bool],
) -> Result<Ptdf> {
    let nb = net.buses.len();
    let nl = net.lines.len();
    let line_up = |l: usize| {
        let line = &net.lines[l];
        !failed_lines[l] && !failed_buses[line.from] && !failed_buses[line.to]
    };

    let mut island_of = vec![None; nb];
    let mut islands = Vec::new();
    for start in 0..nb {
        if failed_buses[start] || island_of[start].is_some() {
            continue;
        }
        let id = islands.len();
        let mut members = vec![start];
        island_of[start] = Some(id);
        let mut k = 0;
        while k < members.len() {
            let i = members[k];
            for &l in net.incident(i) {
                let j = net.lines[l].other(i);
                if line_up(l) && island_of[j].is_none() {
                    island_of[j] = Some(id);
                    members.push(j);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        islands.push(members);
    }

    let line_island: Vec<Option<usize>> = (0..nl)
        .map(|l| line_up(l).then(|| island_of[net.lines[l].from].unwrap()))
        .collect();
    let slack: Vec<usize> = islands
        .iter()
        .map(|m| {
            *m.iter()
                .find(|&&i| net.buses[i].capacity > 0.0)
                .unwrap_or(&m[0])
        })
        .collect();

    let mut factors = vec![0.0; nl * nb];
    for (id, members) in islands.iter().enumerate() {
        if members.len() < 2 {
            continue;
        }
        let s = slack[id];
        // reduced position of each non-slack member
        let mut pos = vec![usize::MAX; nb];
        let reduced: Vec<usize> = members.iter().copied().filter(|&i| i != s).collect();
        for (k, &i) in reduced.iter().enumerate() {
            pos[i] = k;
        }
        let n = reduced.len();
        let mut b = DMatrix::<f64>::zeros(n, n);
        let island_lines: Vec<usize> = (0..nl).filter(|&l| line_island[l] == Some(id)).collect();
        for &l in &island_lines {
            let line = &net.lines[l];
            let y = 1.0 / line.reactance;
            let (pa, pb) = (pos[line.from], pos[line.to]);
            if pa != usize::MAX {
                b[(pa, pa)] += y;
            }
            if pb != usize::MAX {
                b[(pb, pb)] += y;
            }
            if pa != usize::MAX && pb != usize::MAX {
                b[(pa, pb)] -= y;
                b[(pb, pa)] -= y;
            }
        }
        let x = b
            .lu()
            .try_inverse()
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| {
                Error::Numerical(format!("singular susceptance matrix for island {id}"))
            })?;
        for &l in &island_lines {
            let line = &net.lines[l];
            let y = 1.0 / line.reactance;
            for &k in &reduced {
                let xa = if pos[line.from] != usize::MAX {
                    x[(pos[line.from], pos[k])]
                } else {
                    0.0
                };
                let xb = if pos[line.to] != usize::MAX {
                    x[(pos[line.to], pos[k])]
                } else {
                    0.0
                };
                factors[l * nb + k] = (xa - xb) * y;
            }
        }
    }

    Ok(Ptdf {
        lines: nl,
        buses: nb,
        factors,
        island_of,
        line_island,
        islands,
        slack,
    })
}
