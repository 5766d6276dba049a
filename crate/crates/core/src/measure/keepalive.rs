use std::collections::BTreeMap;

use super::PathId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Liveness {
    Available,
    Unavailable,
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    misses: u32,
    outstanding: bool,
    available: bool,
}

/// Per-path liveness from periodic probes: a path is down after `k`
/// consecutive unanswered probes and up again on the first answer.
#[derive(Debug, Clone)]
pub struct Keepalive {
    k: u32,
    next_seq: u32,
    paths: BTreeMap<PathId, Probe>,
}

impl Keepalive {
    pub fn new(paths: &[PathId], k: u32) -> Self {
        let probe = Probe {
            misses: 0,
            outstanding: false,
            available: true,
        };
        Self {
            k: k.max(1),
            next_seq: 0,
            paths: paths.iter().map(|p| (*p, probe)).collect(),
        }
    }

    pub fn is_available(&self, p: PathId) -> bool {
        self.paths.get(&p).is_some_and(|s| s.available)
    }

    /// One probe interval elapsed. Returns probes to send as `(path, seq)`
    /// and liveness changes.
    #[allow(clippy::type_complexity)]
    pub fn tick(&mut self) -> (Vec<(PathId, u32)>, Vec<(PathId, Liveness)>) {
        let mut probes = Vec::new();
        let mut changes = Vec::new();
        for (path, st) in self.paths.iter_mut() {
            if st.outstanding {
                st.misses += 1;
                if st.misses >= self.k && st.available {
                    st.available = false;
                    changes.push((*path, Liveness::Unavailable));
                }
            }
            st.outstanding = true;
            probes.push((*path, self.next_seq));
            self.next_seq = self.next_seq.wrapping_add(1);
        }
        (probes, changes)
    }

    /// A probe answer arrived on `path`. Late answers to older probes
    /// count too: they still prove the path delivers.
    pub fn on_response(&mut self, path: PathId, _seq: u32) -> Option<Liveness> {
        let st = self.paths.get_mut(&path)?;
        st.misses = 0;
        st.outstanding = false;
        if st.available {
            None
        } else {
            st.available = true;
            Some(Liveness::Available)
        }
    }
}
