use std::fmt;
use std::str::FromStr;

/// One line of a golden checksum file:
/// `domain=<n>x<m>x<l> seed=<int> steps=<int> checksum=<hex>`.
///
/// `steps=0` records the checksum of the freshly initialised inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenRecord {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub seed: u64,
    pub steps: usize,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed golden record '{line}': {reason}")]
pub struct GoldenParseError {
    line: String,
    reason: String,
}

impl GoldenRecord {
    /// Parses every non-empty, non-`#` line of a golden file.
    pub fn parse_file(text: &str) -> Result<Vec<GoldenRecord>, GoldenParseError> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for GoldenRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "domain={}x{}x{} seed={} steps={} checksum={}",
            self.n, self.m, self.l, self.seed, self.steps, self.checksum
        )
    }
}

impl FromStr for GoldenRecord {
    type Err = GoldenParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| GoldenParseError { line: s.to_string(), reason: reason.to_string() };
        let mut parts = s.split_whitespace();
        let mut take = |key: &str| {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .and_then(|p| p.strip_prefix('='))
                .ok_or_else(|| err(&format!("expected {key}=...")))
        };
        let domain = take("domain")?;
        let seed = take("seed")?;
        let steps = take("steps")?;
        let checksum = take("checksum")?;
        let dims: Vec<usize> = domain
            .split('x')
            .map(|d| d.parse().map_err(|_| err("domain must be <n>x<m>x<l>")))
            .collect::<Result<_, _>>()?;
        let [n, m, l] = dims[..] else {
            return Err(err("domain must have three extents"));
        };
        if checksum.is_empty() || !checksum.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(err("checksum must be hex"));
        }
        Ok(Self {
            n,
            m,
            l,
            seed: seed.parse().map_err(|_| err("seed must be an integer"))?,
            steps: steps.parse().map_err(|_| err("steps must be an integer"))?,
            checksum: checksum.to_string(),
        })
    }
}
