use std::collections::BTreeMap;

use serde::Serialize;

use super::{FockError, MultimodeState, Port};

/// Distribution of `n_c − n_d` between two output ports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterOutcome {
    pub distribution: BTreeMap<i64, f64>,
    pub mean: f64,
    pub variance: f64,
}

impl ScatterOutcome {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn total_probability(&self) -> f64 {
        self.distribution.values().sum()
    }
}

fn port_modes(state: &MultimodeState, port: Port) -> Result<Vec<usize>, FockError> {
    let idx: Vec<usize> = state
        .modes()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.port == port)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        Err(FockError::MissingPort(port))
    } else {
        Ok(idx)
    }
}

/// Per-basis-element photon counts on the two ports, summed over every
/// polarization and frequency tag on each port.
fn port_counts<'a>(
    state: &'a MultimodeState,
    port_c: Port,
    port_d: Port,
) -> Result<impl Iterator<Item = (usize, usize, f64)> + 'a, FockError> {
    let on_c = port_modes(state, port_c)?;
    let on_d = port_modes(state, port_d)?;
    let probs = state.probabilities();
    Ok(probs.into_iter().enumerate().filter(|(_, p)| *p != 0.0).map(move |(i, p)| {
        let occ = state.occupations(i);
        let nc: usize = on_c.iter().map(|&k| occ[k]).sum();
        let nd: usize = on_d.iter().map(|&k| occ[k]).sum();
        (nc, nd, p)
    }))
}

/// Exact distribution of `n_c − n_d`.
pub fn number_difference_stats(
    state: &MultimodeState,
    port_c: Port,
    port_d: Port,
) -> Result<ScatterOutcome, FockError> {
    let mut distribution = BTreeMap::new();
    for (nc, nd, p) in port_counts(state, port_c, port_d)? {
        *distribution.entry(nc as i64 - nd as i64).or_insert(0.0) += p;
    }
    let mean: f64 = distribution.iter().map(|(&k, &p)| k as f64 * p).sum();
    let variance: f64 = distribution
        .iter()
        .map(|(&k, &p)| (k as f64 - mean).powi(2) * p)
        .sum();
    Ok(ScatterOutcome {
        distribution,
        mean,
        variance,
    })
}

/// Probability that both ports hold at least one photon.
pub fn coincidence_probability(
    state: &MultimodeState,
    port_c: Port,
    port_d: Port,
) -> Result<f64, FockError> {
    Ok(port_counts(state, port_c, port_d)?
        .filter(|(nc, nd, _)| *nc > 0 && *nd > 0)
        .map(|(_, _, p)| p)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{apply_beam_splitter, make_fock, BeamSplitter, ModeLabel, Polarization};
    use approx::assert_abs_diff_eq;

    /// Binomial(N, 1/2) over n_c, mapped to n_c - n_d = 2 n_c - N.
    fn binomial_difference(n: usize) -> BTreeMap<i64, f64> {
        let mut out = BTreeMap::new();
        let mut coeff = 1.0f64;
        for k in 0..=n {
            if k > 0 {
                coeff = coeff * (n - k + 1) as f64 / k as f64;
            }
            out.insert(2 * k as i64 - n as i64, coeff / 2f64.powi(n as i32));
        }
        out
    }

    #[test]
    fn n_photons_on_one_port_give_binomial() {
        let out = apply_beam_splitter(&make_fock(4, 0, 4).unwrap(), &BeamSplitter::balanced()).unwrap();
        let stats = number_difference_stats(&out, Port::C, Port::D).unwrap();
        let expected = binomial_difference(4);
        assert_eq!(stats.distribution.len(), expected.len());
        for (k, p) in expected {
            assert_abs_diff_eq!(stats.distribution[&k], p, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(stats.std_dev(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn hom_values() {
        let out = apply_beam_splitter(&make_fock(1, 1, 2).unwrap(), &BeamSplitter::balanced()).unwrap();
        let stats = number_difference_stats(&out, Port::C, Port::D).unwrap();
        assert_eq!(stats.distribution.keys().copied().collect::<Vec<_>>(), vec![-2, 0, 2]);
        assert_abs_diff_eq!(stats.distribution[&-2], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.distribution[&0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.std_dev(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(coincidence_probability(&out, Port::C, Port::D).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn distinguishable_coincidence_is_one_half() {
        let s = MultimodeState::fock(
            vec![
                ModeLabel::new(Port::A, Polarization::H, 0),
                ModeLabel::new(Port::B, Polarization::H, 3),
            ],
            &[1, 1],
            2,
        )
        .unwrap();
        let out = apply_beam_splitter(&s, &BeamSplitter::balanced()).unwrap();
        assert_abs_diff_eq!(coincidence_probability(&out, Port::C, Port::D).unwrap(), 0.5, epsilon = 1e-15);
        let stats = number_difference_stats(&out, Port::C, Port::D).unwrap();
        assert_abs_diff_eq!(stats.std_dev(), 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn vacuum_has_no_coincidences() {
        let out = apply_beam_splitter(&make_fock(0, 0, 1).unwrap(), &BeamSplitter::balanced()).unwrap();
        assert_eq!(coincidence_probability(&out, Port::C, Port::D).unwrap(), 0.0);
        let stats = number_difference_stats(&out, Port::C, Port::D).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.variance, 0.0);
    }

    #[test]
    fn missing_port_is_error() {
        let s = make_fock(1, 0, 1).unwrap();
        assert!(matches!(
            number_difference_stats(&s, Port::C, Port::D),
            Err(FockError::MissingPort(Port::C))
        ));
    }
}
