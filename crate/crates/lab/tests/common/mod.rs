#![allow(dead_code)]

use alpha_core::prob::qi;
use alpha_core::{Role, Q};
use alpha_lab::csvlog::SessionRow;
use alpha_lab::schedule::PeriodValues;

/// Both rows of one pair, with the outcome worked out directly from the
/// price rule rather than through the engine.
pub fn pair_rows(session: &str, ty: u8, alpha: Q, period: u32, pair_id: u32, v: PeriodValues, bl: u32, bh: u32) -> [SessionRow; 2] {
    let hv_wins = bh >= bl;
    let (wb, lb) = if hv_wins { (bh, bl) } else { (bl, bh) };
    let t = alpha * qi(wb as i128) + (qi(1) - alpha) * qi(lb as i128);
    let winner = if hv_wins { Role::High } else { Role::Low };
    let (vl, vh) = (v.item_b_low - v.item_a, v.item_b_high - v.item_a);
    let eq = hv_wins && qi((vl / 2) as i128) <= t && t <= qi((vh / 2) as i128);
    let row = |role: Role, subject: u32, own: u32, opp: u32| {
        let b_own = if role == Role::Low { v.item_b_low } else { v.item_b_high };
        let b_other = if role == Role::Low { v.item_b_high } else { v.item_b_low };
        let points = if role == winner { qi(b_own as i128) - t } else { qi(v.item_a as i128) + t };
        SessionRow {
            session_id: session.to_string(),
            session_type: ty,
            auction_alpha: alpha,
            period,
            pair_id,
            subject_id: subject,
            role,
            item_a: v.item_a,
            item_b_own: b_own,
            item_b_other: b_other,
            bid: own,
            revisions: 0,
            opp_bid: opp,
            winner_role: winner,
            transfer: t,
            raw_points: points,
            efficient: hv_wins,
            equilibrium_outcome: eq,
        }
    };
    [
        row(Role::Low, 2 * pair_id - 1, bl, bh),
        row(Role::High, 2 * pair_id, bh, bl),
    ]
}

/// One period from `(lv_bid, hv_bid)` pairs.
pub fn period_rows(session: &str, ty: u8, alpha: Q, period: u32, v: PeriodValues, bids: &[(u32, u32)]) -> Vec<SessionRow> {
    bids.iter()
        .enumerate()
        .flat_map(|(i, &(bl, bh))| pair_rows(session, ty, alpha, period, i as u32 + 1, v, bl, bh))
        .collect()
}

/// Reduced payoff of `role` bidding `own` against `opp`, from the rules.
pub fn reduced_payoff(alpha: Q, vl: u32, vh: u32, role: Role, own: u32, opp: u32) -> Q {
    let (bl, bh) = if role == Role::Low { (own, opp) } else { (opp, own) };
    let hv_wins = bh >= bl;
    let (wb, lb) = if hv_wins { (bh, bl) } else { (bl, bh) };
    let t = alpha * qi(wb as i128) + (qi(1) - alpha) * qi(lb as i128);
    let v = if role == Role::Low { vl } else { vh };
    if hv_wins == (role == Role::High) {
        qi(v as i128) - t
    } else {
        t
    }
}
