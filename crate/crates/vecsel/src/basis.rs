//! Ordering of the collective variables.
//!
//! Fields come first (a+, a-, b+, b-, then their conjugates), then the
//! polarizations and their conjugates, then the six upper-level populations
//! (M+, M-, N+, N-, L+, L-). With [`CouplingModel::Coherent`] this is the
//! 26-entry vector
//!
//! `a+ a- b+ b- a+' a-' b+' b-' P+ P- Q+ Q- X+ X- P+' P-' Q+' Q-' X+' X-' M+ M- N+ N- L+ L-`
//!
//! where `'` marks the adjoint and `X` the shared-region polarization. The
//! separated model replaces `X` by an a-resonant `Xa` and a b-resonant `Xb`.

use crate::model::CouplingModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    A,
    B,
}

/// Active regions: a-only, b-only, shared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    M,
    N,
    L,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::M, Region::N, Region::L];

    pub fn index(self) -> usize {
        match self {
            Region::M => 0,
            Region::N => 1,
            Region::L => 2,
        }
    }
}

/// One collective polarization of a region and spin branch, driven by the
/// listed field modes of the same spin.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub region: Region,
    pub spin: usize,
    pub modes: Vec<Mode>,
    pub label: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub model: CouplingModel,
    pub channels: Vec<Channel>,
}

const SPIN_SUFFIX: [&str; 2] = ["+", "-"];

impl Layout {
    pub fn new(model: CouplingModel) -> Self {
        let mut channels = Vec::new();
        let mut push = |region, modes: &[Mode], label| {
            for spin in 0..2 {
                channels.push(Channel { region, spin, modes: modes.to_vec(), label });
            }
        };
        push(Region::M, &[Mode::A], "P");
        push(Region::N, &[Mode::B], "Q");
        match model {
            CouplingModel::Coherent => push(Region::L, &[Mode::A, Mode::B], "Xi"),
            CouplingModel::Separated => {
                push(Region::L, &[Mode::A], "Xia");
                push(Region::L, &[Mode::B], "Xib");
            }
        }
        Layout { model, channels }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn dim(&self) -> usize {
        8 + 2 * self.n_channels() + 6
    }

    pub fn field(&self, mode: Mode, spin: usize) -> usize {
        match mode {
            Mode::A => spin,
            Mode::B => 2 + spin,
        }
    }

    pub fn field_conj(&self, mode: Mode, spin: usize) -> usize {
        4 + self.field(mode, spin)
    }

    pub fn channel(&self, k: usize) -> usize {
        8 + k
    }

    pub fn channel_conj(&self, k: usize) -> usize {
        8 + self.n_channels() + k
    }

    pub fn population(&self, region: Region, spin: usize) -> usize {
        8 + 2 * self.n_channels() + 2 * region.index() + spin
    }

    pub fn first_population(&self) -> usize {
        8 + 2 * self.n_channels()
    }

    /// Index of the adjoint of variable `i`; populations map to themselves.
    pub fn conj(&self, i: usize) -> usize {
        let nc = self.n_channels();
        match i {
            0..=3 => i + 4,
            4..=7 => i - 4,
            _ if i < 8 + nc => i + nc,
            _ if i < 8 + 2 * nc => i - nc,
            _ => i,
        }
    }

    /// +1 for amplitudes, -1 for adjoints, 0 for populations.
    pub fn charge(&self, i: usize) -> f64 {
        let nc = self.n_channels();
        if i < 4 || (8..8 + nc).contains(&i) {
            1.0
        } else if i < 8 + 2 * nc {
            -1.0
        } else {
            0.0
        }
    }

    /// Independent complex amplitudes (fields and polarizations, not adjoints).
    pub fn amplitudes(&self) -> Vec<usize> {
        (0..4).chain(8..8 + self.n_channels()).collect()
    }

    /// Mode whose phase variable `i` follows, if any. In the coherent model
    /// both modes share one phase and `Mode::A` is returned for everything.
    pub fn phase_mode(&self, i: usize) -> Option<Mode> {
        let nc = self.n_channels();
        let mode = if i < 8 {
            if i % 4 < 2 { Mode::A } else { Mode::B }
        } else if i < 8 + 2 * nc {
            let ch = &self.channels[(i - 8) % nc];
            ch.modes[0]
        } else {
            return None;
        };
        Some(match self.model {
            CouplingModel::Coherent => Mode::A,
            CouplingModel::Separated => mode,
        })
    }

    /// Phase groups: one per mode in the separated model, one shared group
    /// in the coherent model.
    pub fn phase_groups(&self) -> Vec<Mode> {
        match self.model {
            CouplingModel::Coherent => vec![Mode::A],
            CouplingModel::Separated => vec![Mode::A, Mode::B],
        }
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for adj in ["", "'"] {
            for m in ["a", "b"] {
                for s in SPIN_SUFFIX {
                    out.push(format!("{m}{s}{adj}"));
                }
            }
        }
        for adj in ["", "'"] {
            for ch in &self.channels {
                out.push(format!("{}{}{adj}", ch.label, SPIN_SUFFIX[ch.spin]));
            }
        }
        for r in ["M2", "N2", "L2"] {
            for s in SPIN_SUFFIX {
                out.push(format!("{r}{s}"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherent_layout_matches_the_26_entry_vector() {
        let l = Layout::new(CouplingModel::Coherent);
        assert_eq!(l.dim(), 26);
        let labels = l.labels();
        assert_eq!(labels[0], "a+");
        assert_eq!(labels[7], "b-'");
        assert_eq!(labels[12], "Xi+");
        assert_eq!(labels[19], "Xi-'");
        assert_eq!(labels[25], "L2-");
        for i in 0..4 {
            assert_eq!(l.conj(i), i + 4);
        }
        for i in 8..14 {
            assert_eq!(l.conj(i), i + 6);
        }
        for i in 20..26 {
            assert_eq!(l.conj(i), i);
        }
    }

    #[test]
    fn conj_is_an_involution() {
        for model in [CouplingModel::Coherent, CouplingModel::Separated] {
            let l = Layout::new(model);
            for i in 0..l.dim() {
                assert_eq!(l.conj(l.conj(i)), i);
                assert_eq!(l.charge(l.conj(i)), -l.charge(i));
            }
        }
    }

    #[test]
    fn separated_layout() {
        let l = Layout::new(CouplingModel::Separated);
        assert_eq!(l.dim(), 30);
        assert_eq!(l.population(Region::M, 0), 24);
        assert_eq!(l.phase_mode(l.channel(6)), Some(Mode::B));
        assert_eq!(l.phase_mode(l.channel_conj(4)), Some(Mode::A));
    }
}
