//! Gantt charts of plans: one row (lane) per machine, one column per slot.

use std::fmt::Write as _;

use crate::model::{MachineId, PieceId, Plan};

const SLOT_PX: u32 = 10;
const LANE_PX: u32 = 20;
const LABEL_PX: u32 = 40;
const AXIS_PX: u32 = 16;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

/// Cell character of a piece: `A` for piece 1, `B` for piece 2, then
/// lowercase from piece 27 and `#` beyond 52.
pub fn piece_letter(piece: PieceId) -> char {
    match piece.0 {
        n @ 1..=26 => (b'A' + (n - 1) as u8) as char,
        n @ 27..=52 => (b'a' + (n - 27) as u8) as char,
        _ => '#',
    }
}

/// Text chart; rows are padded to the makespan.
///
/// ```text
/// M1 |AAB.|
/// M2 |.BB.|
/// ```
pub fn gantt_text(plan: &Plan, machines: &[MachineId]) -> String {
    let width = plan.makespan as usize;
    let label = machines
        .iter()
        .map(|m| m.to_string().len())
        .max()
        .unwrap_or(2);
    let mut out = String::new();
    for &m in machines {
        let mut row = vec!['.'; width];
        for p in plan.placements.iter().filter(|p| p.machine == m) {
            for cell in &mut row[p.start as usize..p.finish as usize] {
                *cell = piece_letter(p.piece);
            }
        }
        let row: String = row.into_iter().collect();
        let _ = writeln!(out, "{:<label$} |{row}|", m.to_string());
    }
    out
}

/// SVG chart, 10px per slot and one 20px lane per machine.
pub fn gantt_svg(plan: &Plan, machines: &[MachineId]) -> String {
    let width = LABEL_PX + plan.makespan * SLOT_PX + SLOT_PX;
    let height = machines.len() as u32 * LANE_PX + AXIS_PX;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="10">"#
    );
    for (lane, &m) in machines.iter().enumerate() {
        let y = lane as u32 * LANE_PX;
        let _ = writeln!(s, r#"<text x="2" y="{}">{m}</text>"#, y + LANE_PX / 2 + 4);
        let _ = writeln!(
            s,
            r##"<line x1="{LABEL_PX}" y1="{}" x2="{}" y2="{}" stroke="#ccc"/>"##,
            y + LANE_PX,
            width,
            y + LANE_PX
        );
        for p in plan.placements.iter().filter(|p| p.machine == m) {
            let color = PALETTE[(p.piece.0 as usize).saturating_sub(1) % PALETTE.len()];
            let x = LABEL_PX + p.start * SLOT_PX;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="{}" height="{}" fill="{color}" stroke="black"><title>{}.{} [{},{})</title></rect>"#,
                y + 2,
                p.length() * SLOT_PX,
                LANE_PX - 4,
                p.piece,
                p.step,
                p.start,
                p.finish
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                x + 2,
                y + LANE_PX / 2 + 4,
                piece_letter(p.piece)
            );
        }
    }
    let axis_y = machines.len() as u32 * LANE_PX + AXIS_PX - 4;
    for t in (0..=plan.makespan).step_by(5) {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{axis_y}">{t}</text>"#,
            LABEL_PX + t * SLOT_PX
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    fn two_piece_plan() -> Plan {
        let inst = fig6();
        Plan::new(
            vec![
                place(1, 1, 1, 0, 1),
                place(1, 2, 1, 1, 2),
                place(2, 1, 2, 0, 1),
            ],
            &inst,
        )
    }

    #[test]
    fn letters() {
        assert_eq!(piece_letter(PieceId(1)), 'A');
        assert_eq!(piece_letter(PieceId(26)), 'Z');
        assert_eq!(piece_letter(PieceId(27)), 'a');
        assert_eq!(piece_letter(PieceId(99)), '#');
    }

    #[test]
    fn text_rows() {
        let machines = [MachineId(1), MachineId(2), MachineId(3)];
        assert_eq!(
            gantt_text(&two_piece_plan(), &machines),
            "M1 |AAA|\nM2 |B..|\nM3 |...|\n"
        );
    }

    #[test]
    fn svg_scale() {
        let svg = gantt_svg(&two_piece_plan(), &[MachineId(1), MachineId(2)]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"<rect x="50" y="2" width="20""#));
        assert!(svg.contains(r#"<rect x="40" y="22" width="10""#));
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(svg.ends_with("</svg>\n"));
    }
}
