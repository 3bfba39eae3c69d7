use crate::error::{Error, Result};

/// Parses a comma-separated grid. Each item is an integer or a doubling
/// range `a..b` (`a, 2a, 4a, ...` up to and including `b`).
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let bad = |why: String| Error::Validation(format!("grid {text:?}: {why}"));
    let mut values = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| bad(format!("{s:?} is not a positive integer")))
        };
        match item.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (parse(lo)?, parse(hi)?);
                if hi < lo {
                    return Err(bad(format!("range {item} is empty")));
                }
                let mut v = lo;
                while v <= hi {
                    values.push(v);
                    v = match v.checked_mul(2) {
                        Some(next) => next,
                        None => break,
                    };
                }
            }
            None => values.push(parse(item)?),
        }
    }
    if values.is_empty() {
        return Err(bad("no values".into()));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_grid("16..32768").unwrap().len(), 12);
        assert_eq!(parse_grid("8..32768").unwrap().len(), 13);
        assert_eq!(parse_grid("4, 8,100").unwrap(), [4, 8, 100]);
        assert_eq!(parse_grid("3..12").unwrap(), [3, 6, 12]);
    }

    #[test]
    fn rejects_empty_and_malformed() {
        assert!(parse_grid("").is_err());
        assert!(parse_grid(" , ").is_err());
        assert!(parse_grid("0").is_err());
        assert!(parse_grid("8..4").is_err());
        assert!(parse_grid("x").is_err());
    }
}
