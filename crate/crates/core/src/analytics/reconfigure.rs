//! Collision probability and collision-free reconfiguration.

use std::fmt::Write as _;

use crate::env::{UeAction, NUM_UES};
use crate::error::{Error, Result};
use crate::extract::VocabId;
use crate::infer::{access_probability, select_ue, with_grant_free};
use crate::semantic::{format_prob, ClauseKind, Spm};

/// Access truth probability of UE `i` at `b`, zero for an empty buffer
/// since such an access is executed as Silence.
fn feasible_access(spm: &Spm, b: [usize; NUM_UES], i: usize) -> Result<f64> {
    let p = access_probability(spm, b, i)?;
    Ok(if b[i] == 0 { 0.0 } else { p })
}

/// Probability that both UEs access at `b` under their Access truth
/// probabilities.
pub fn collision_probability(spm: &Spm, b: [usize; NUM_UES]) -> Result<f64> {
    Ok(feasible_access(spm, b, 0)? * feasible_access(spm, b, 1)?)
}

/// One Access clause turned into a Silence clause.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Manipulation {
    pub state: [usize; NUM_UES],
    pub ue: usize,
    pub dcm: VocabId,
    pub prob: f64,
    /// Collision probability at `state` before the change.
    pub collision_prob: f64,
}

pub const MANIPULATION_CSV_HEADER: &str = "step,b1,b2,ue,dcm,removed,added,prob,collision_prob";

pub fn manipulation_csv(log: &[Manipulation]) -> String {
    let mut s = format!("{MANIPULATION_CSV_HEADER}\n");
    for (k, m) in log.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            k + 1,
            m.state[0],
            m.state[1],
            m.ue + 1,
            m.dcm,
            VocabId::action(m.ue, UeAction::Access),
            VocabId::action(m.ue, UeAction::Silence),
            format_prob(m.prob),
            m.collision_prob
        );
    }
    s
}

/// Replaces Access clauses with Silence clauses until no domain state has a
/// collision probability above `p_th`. States are visited in sorted order and
/// the first offending state is fixed by silencing the UE with the lower
/// Access probability (UE 1 on ties) at its selected DCM. Grant-free clauses
/// are recomputed on the result when the input had any.
pub fn reconfigure_collision_free(spm: &Spm, p_th: f64) -> Result<(Spm, Vec<Manipulation>)> {
    if !(0.0..=1.0).contains(&p_th) {
        return Err(Error::ProbabilityRange(p_th));
    }
    let had_grant_free = spm.clauses_of(ClauseKind::GrantFree).next().is_some();
    let mut s = spm.without_grant_free();
    let guard = s.clauses_of(ClauseKind::Action).count();
    let domain = s.domain();
    let mut log = Vec::new();
    loop {
        let mut offending = None;
        for &b in &domain {
            let p = match collision_probability(&s, b) {
                Ok(p) => p,
                Err(Error::NoRule(..)) => continue,
                Err(e) => return Err(e),
            };
            if p > p_th {
                offending = Some((b, p));
                break;
            }
        }
        let Some((b, p)) = offending else { break };
        if log.len() >= guard {
            return Err(Error::NonConvergence(log.len()));
        }
        let ue = if feasible_access(&s, b, 1)? < feasible_access(&s, b, 0)? { 1 } else { 0 };
        let dcm = select_ue(&s, b, ue)?.dcm.expect("grant-free clauses were removed");
        let access = VocabId::action(ue, UeAction::Access);
        let silence = VocabId::action(ue, UeAction::Silence);
        let moved = s.remove(dcm, access).expect("an accessing UE has an Access clause");
        let kept = s.prob(dcm, silence).unwrap_or(0.0);
        s.insert(dcm, silence, (kept + moved).min(1.0))?;
        log.push(Manipulation { state: b, ue, dcm, prob: moved, collision_prob: p });
    }
    if had_grant_free {
        s = with_grant_free(&s);
    }
    Ok((s, log))
}
