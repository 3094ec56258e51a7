use std::collections::BTreeMap;

use crate::model::{DownInterval, MachineId};

use super::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub start: u32,
    pub finish: u32,
    pub node: NodeId,
}

/// Per-machine reserved intervals (kept sorted and disjoint) plus down intervals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MachineCalendar {
    reserved: BTreeMap<MachineId, Vec<Reservation>>,
    down: BTreeMap<MachineId, Vec<DownInterval>>,
}

impl MachineCalendar {
    pub fn new(machines: &[MachineId], down: &[DownInterval]) -> Self {
        let mut cal = MachineCalendar {
            reserved: machines.iter().map(|&m| (m, Vec::new())).collect(),
            down: machines.iter().map(|&m| (m, Vec::new())).collect(),
        };
        for d in down {
            cal.add_down(*d);
        }
        cal
    }

    pub fn add_down(&mut self, d: DownInterval) {
        self.down.entry(d.machine).or_default().push(d);
    }

    pub fn reservations(&self, machine: MachineId) -> &[Reservation] {
        self.reserved.get(&machine).map_or(&[], Vec::as_slice)
    }

    pub fn all_reservations(&self) -> impl Iterator<Item = (MachineId, &Reservation)> {
        self.reserved
            .iter()
            .flat_map(|(&m, v)| v.iter().map(move |r| (m, r)))
    }

    /// End of the first obstacle overlapping `[start, start + len)`, if any.
    fn blocker(&self, machine: MachineId, start: u32, len: u32) -> Option<u32> {
        let finish = start.saturating_add(len);
        let mut end = None;
        if let Some(list) = self.reserved.get(&machine) {
            let idx = list.partition_point(|r| r.finish <= start);
            if let Some(r) = list.get(idx) {
                if r.start < finish {
                    end = Some(r.finish);
                }
            }
        }
        if let Some(list) = self.down.get(&machine) {
            for d in list.iter().filter(|d| d.overlaps(start, finish)) {
                end = Some(end.map_or(d.end(), |e: u32| e.max(d.end())));
            }
        }
        end
    }

    pub fn is_free(&self, machine: MachineId, start: u32, len: u32) -> bool {
        self.blocker(machine, start, len).is_none()
    }

    /// Earliest `t >= from` with `[t, t + len)` free and `t + len <= limit`.
    pub fn earliest_free(
        &self,
        machine: MachineId,
        from: u32,
        len: u32,
        limit: u32,
    ) -> Option<u32> {
        let mut t = from;
        loop {
            if t.checked_add(len)? > limit {
                return None;
            }
            match self.blocker(machine, t, len) {
                None => return Some(t),
                Some(end) => t = end.max(t + 1),
            }
        }
    }

    pub fn reserve(&mut self, machine: MachineId, start: u32, finish: u32, node: NodeId) {
        debug_assert!(self.is_free(machine, start, finish - start));
        let list = self.reserved.entry(machine).or_default();
        let idx = list.partition_point(|r| r.start < start);
        list.insert(
            idx,
            Reservation {
                start,
                finish,
                node,
            },
        );
    }

    pub fn release(&mut self, machine: MachineId, node: NodeId) -> bool {
        let Some(list) = self.reserved.get_mut(&machine) else {
            return false;
        };
        let before = list.len();
        list.retain(|r| r.node != node);
        before != list.len()
    }

    pub fn clear_reservations(&mut self) {
        self.reserved.values_mut().for_each(Vec::clear);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PieceId, StepId};

    fn node(n: u32) -> NodeId {
        NodeId::new(PieceId(1), StepId(n))
    }

    #[test]
    fn earliest_free_skips_reservations_and_downtime() {
        let m = MachineId(1);
        let mut cal = MachineCalendar::new(
            &[m],
            &[DownInterval {
                machine: m,
                from: 6,
                to: Some(8),
            }],
        );
        cal.reserve(m, 0, 2, node(1));
        cal.reserve(m, 3, 5, node(2));
        assert_eq!(cal.earliest_free(m, 0, 1, 100), Some(2));
        assert_eq!(cal.earliest_free(m, 0, 2, 100), Some(8));
        assert_eq!(cal.earliest_free(m, 0, 2, 9), None);
        assert!(cal.release(m, node(2)));
        assert_eq!(cal.earliest_free(m, 0, 3, 100), Some(2));
        assert!(!cal.release(m, node(2)));
    }

    #[test]
    fn open_ended_downtime_never_frees() {
        let m = MachineId(2);
        let cal = MachineCalendar::new(
            &[m],
            &[DownInterval {
                machine: m,
                from: 0,
                to: None,
            }],
        );
        assert_eq!(cal.earliest_free(m, 0, 1, u32::MAX), None);
    }
}
