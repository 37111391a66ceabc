use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::WorkloadError;
use crate::model::{TransferSpec, WorkloadPage};

/// Size of the base document every generated page starts with.
pub const ROOT_SIZE_BYTES: u64 = 10 * 1024;

/// A handcrafted page: groups of equally sized objects behind one base
/// document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// (object count, object size in bytes)
    pub groups: Vec<(usize, u64)>,
    pub host_count: usize,
    pub tls: bool,
}

impl SyntheticSpec {
    pub fn new(groups: Vec<(usize, u64)>) -> Self {
        Self {
            groups,
            host_count: 1,
            tls: false,
        }
    }

    /// Parses `"16x1KB,8x10KB,4x100KB"`.
    pub fn parse_groups(text: &str) -> Result<Vec<(usize, u64)>, WorkloadError> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|g| {
                let (count, size) = g
                    .split_once(['x', 'X'])
                    .ok_or_else(|| WorkloadError::InvalidSpec(format!("expected COUNTxSIZE, got {g:?}")))?;
                let count = count
                    .trim()
                    .parse()
                    .map_err(|_| WorkloadError::InvalidSpec(format!("bad count in {g:?}")))?;
                Ok((count, parse_size(size)?))
            })
            .collect()
    }

    pub fn object_count(&self) -> usize {
        self.groups.iter().map(|g| g.0).sum()
    }

    fn label(&self) -> String {
        self.groups
            .iter()
            .map(|&(c, s)| format!("{c}x{}", format_size(s)))
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Parses sizes like `100KB`, `1MB`, `512B` or `2048` (binary multiples).
pub fn parse_size(text: &str) -> Result<u64, WorkloadError> {
    let t = text.trim();
    let upper = t.to_ascii_uppercase();
    let (digits, mult) = if let Some(d) = upper.strip_suffix("MB") {
        (d, 1024 * 1024)
    } else if let Some(d) = upper.strip_suffix("KB") {
        (d, 1024)
    } else if let Some(d) = upper.strip_suffix('B') {
        (d, 1)
    } else {
        (upper.as_str(), 1)
    };
    digits
        .trim()
        .parse::<u64>()
        .map(|v| v * mult)
        .map_err(|_| WorkloadError::InvalidSpec(format!("bad size {t:?}")))
}

fn format_size(bytes: u64) -> String {
    if bytes.is_multiple_of(1024 * 1024) {
        format!("{}MB", bytes / (1024 * 1024))
    } else if bytes.is_multiple_of(1024) {
        format!("{}KB", bytes / 1024)
    } else {
        format!("{bytes}B")
    }
}

/// Builds a page with a 10 KB root on `host0` and every object depending on
/// it. Objects are shuffled with `seed`, then spread round-robin over the
/// hosts.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<WorkloadPage, WorkloadError> {
    if spec.groups.is_empty() || spec.groups.iter().any(|&(c, s)| c == 0 || s == 0) {
        return Err(WorkloadError::InvalidSpec("counts and sizes must be positive".into()));
    }
    if spec.host_count == 0 {
        return Err(WorkloadError::InvalidSpec("host_count must be positive".into()));
    }
    let mut sizes: Vec<u64> = spec
        .groups
        .iter()
        .flat_map(|&(count, size)| std::iter::repeat_n(size, count))
        .collect();
    sizes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let width = sizes.len().to_string().len();
    let mut transfers = vec![TransferSpec::new("index", ROOT_SIZE_BYTES, "host0").with_tls(spec.tls)];
    transfers.extend(sizes.into_iter().enumerate().map(|(i, size)| {
        TransferSpec::new(format!("obj{i:0width$}"), size, format!("host{}", i % spec.host_count))
            .with_tls(spec.tls)
            .with_deps(["index"])
    }));
    Ok(WorkloadPage::new(spec.label(), transfers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_page;

    #[test]
    fn thirty_two_by_100kb() {
        let page = generate_synthetic(&SyntheticSpec::new(vec![(32, 100 * 1024)]), 0).unwrap();
        assert_eq!(page.transfers.len(), 33);
        assert!(page.transfers[1..]
            .iter()
            .all(|t| t.size_bytes == 102_400 && t.deps == ["index"]));
        assert_eq!(page.name, "32x100KB");
        assert!(validate_page(&page).is_ok());
    }

    #[test]
    fn mixed_page() {
        let spec = SyntheticSpec::new(vec![(16, 1024), (8, 10 * 1024), (4, 100 * 1024)]);
        let page = generate_synthetic(&spec, 1).unwrap();
        assert_eq!(page.transfers.len(), 29);
        assert_eq!(
            page.total_bytes(),
            16 * 1024 + 8 * 10 * 1024 + 4 * 100 * 1024 + ROOT_SIZE_BYTES
        );
        assert_eq!(page, generate_synthetic(&spec, 1).unwrap());
        assert_ne!(page, generate_synthetic(&spec, 2).unwrap());
    }

    #[test]
    fn minimal_page_and_hosts() {
        let mut spec = SyntheticSpec::new(vec![(2, 1024)]);
        let page = generate_synthetic(&spec, 0).unwrap();
        assert_eq!(page.transfers.len(), 3);
        assert_eq!(page.edge_count(), 2);
        spec.host_count = 2;
        let page = generate_synthetic(&spec, 0).unwrap();
        assert_eq!(page.transfers[1].host, "host0");
        assert_eq!(page.transfers[2].host, "host1");
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic(&SyntheticSpec::new(vec![]), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(vec![(0, 10)]), 0).is_err());
    }

    #[test]
    fn parses_group_lists() {
        assert_eq!(SyntheticSpec::parse_groups("32x100KB").unwrap(), vec![(32, 102_400)]);
        assert_eq!(
            SyntheticSpec::parse_groups("16x1KB, 8x10kb,2x1MB,3x7").unwrap(),
            vec![(16, 1024), (8, 10_240), (2, 1_048_576), (3, 7)]
        );
        assert!(SyntheticSpec::parse_groups("abc").is_err());
        assert!(parse_size("12GB").is_err());
    }

    proptest::proptest! {
        #[test]
        fn total_bytes_is_conserved(groups in proptest::collection::vec((1usize..20, 1u64..2_000_000), 1..5), hosts in 1usize..5, seed in 0u64..1000) {
            let spec = SyntheticSpec { groups: groups.clone(), host_count: hosts, tls: false };
            let page = generate_synthetic(&spec, seed).unwrap();
            let expect: u64 = groups.iter().map(|&(c, s)| c as u64 * s).sum::<u64>() + ROOT_SIZE_BYTES;
            proptest::prop_assert_eq!(page.total_bytes(), expect);
            proptest::prop_assert!(validate_page(&page).is_ok());
        }
    }
}
