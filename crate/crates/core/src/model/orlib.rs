//! Reader and writer for the OR-library GAP text format.
//!
//! The file is a stream of whitespace-separated integers: the number of
//! problems `P`, then for each problem `M N`, the `M x N` cost matrix and the
//! `M x N` resource matrix (both machine-major), and the `M` capacities.

use super::GapInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Strip `#` comments and ignore anything after the declared problems.
    pub lenient: bool,
}

struct Tokens<'a> {
    iter: std::vec::IntoIter<&'a str>,
    lenient: bool,
    consumed: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, lenient: bool) -> Self {
        let toks: Vec<&str> = if lenient {
            text.lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(str::split_whitespace)
                .collect()
        } else {
            text.split_whitespace().collect()
        };
        Tokens {
            iter: toks.into_iter(),
            lenient,
            consumed: 0,
        }
    }

    fn next_int(&mut self, what: &str) -> Result<Option<i64>> {
        match self.iter.next() {
            None => Ok(None),
            Some(tok) => {
                self.consumed += 1;
                tok.parse::<i64>().map(Some).map_err(|_| {
                    Error::Parse(format!(
                        "token {} ({what}): '{tok}' is not an integer",
                        self.consumed
                    ))
                })
            }
        }
    }

    fn scalar(&mut self, what: &str) -> Result<i64> {
        self.next_int(what)?
            .ok_or_else(|| Error::Parse(format!("unexpected end of input: expected {what}")))
    }

    fn block(&mut self, count: usize, what: &str) -> Result<Vec<i64>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            match self.next_int(what)? {
                Some(v) => out.push(v),
                None => {
                    return Err(Error::Parse(format!(
                        "expected {count} {what} entries, found {}",
                        out.len()
                    )))
                }
            }
        }
        Ok(out)
    }

    fn finish(mut self) -> Result<()> {
        if self.lenient {
            return Ok(());
        }
        let rest = self.iter.by_ref().count();
        if rest > 0 {
            return Err(Error::Parse(format!(
                "{rest} trailing token(s) after the last problem"
            )));
        }
        Ok(())
    }
}

fn dimension(v: i64, what: &str) -> Result<usize> {
    usize::try_from(v)
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Validation(format!("{what} must be positive, got {v}")))
}

fn read_problem(tokens: &mut Tokens<'_>) -> Result<GapInstance> {
    let m = dimension(tokens.scalar("machine count")?, "machine count")?;
    let n = dimension(tokens.scalar("job count")?, "job count")?;
    let costs = tokens.block(m * n, "cost")?;
    let resources = tokens.block(m * n, "resource")?;
    let capacity = tokens.block(m, "capacity")?;
    // machine-major on disk, job-major in memory
    let transpose = |flat: &[i64]| -> Vec<Vec<i64>> {
        (0..n)
            .map(|i| (0..m).map(|j| flat[j * n + i]).collect())
            .collect()
    };
    GapInstance::from_signed(transpose(&costs), transpose(&resources), capacity)
}

/// Parses a multi-problem OR-library GAP file.
pub fn parse_orlib_gap(text: &str, options: ParseOptions) -> Result<Vec<GapInstance>> {
    let mut tokens = Tokens::new(text, options.lenient);
    let p = tokens.scalar("problem count")?;
    let p =
        usize::try_from(p).map_err(|_| Error::Validation(format!("negative problem count {p}")))?;
    let instances = (0..p)
        .map(|k| read_problem(&mut tokens).map_err(|e| prefix(e, k)))
        .collect::<Result<Vec<_>>>()?;
    tokens.finish()?;
    Ok(instances)
}

/// Parses a single problem without the leading problem count (`M N ...`).
pub fn parse_gap_instance(text: &str, options: ParseOptions) -> Result<GapInstance> {
    let mut tokens = Tokens::new(text, options.lenient);
    let inst = read_problem(&mut tokens)?;
    tokens.finish()?;
    Ok(inst)
}

fn prefix(e: Error, k: usize) -> Error {
    match e {
        Error::Parse(s) => Error::Parse(format!("problem {}: {s}", k + 1)),
        Error::Validation(s) => Error::Validation(format!("problem {}: {s}", k + 1)),
        other => other,
    }
}

/// Writes instances back in the multi-problem format.
pub fn write_orlib_gap(instances: &[GapInstance]) -> String {
    let mut out = format!("{}\n", instances.len());
    for inst in instances {
        let (m, n) = (inst.machines(), inst.jobs());
        out.push_str(&format!(" {m} {n}\n"));
        for rows in [inst.cost_rows(), inst.resource_rows()] {
            for j in 0..m {
                let line: Vec<String> = rows.iter().map(|row| row[j].to_string()).collect();
                out.push(' ');
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        let caps: Vec<String> = inst.capacity().iter().map(u64::to_string).collect();
        out.push(' ');
        out.push_str(&caps.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "1\n2 3\n1 2 3\n4 5 6\n1 1 1\n1 1 1\n2 2\n";

    #[test]
    fn minimal_file() {
        let v = parse_orlib_gap(MINIMAL, ParseOptions::default()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].machines(), 2);
        assert_eq!(v[0].jobs(), 3);
        // machine 1's costs are 4 5 6, stored job-major
        assert_eq!(v[0].cost(0, 1), 4);
        assert_eq!(v[0].cost(2, 0), 3);
    }

    #[test]
    fn truncated_stream_names_missing_field() {
        let err = parse_orlib_gap("1 2 3", ParseOptions::default()).unwrap_err();
        assert!(err.to_string().contains("expected 6 cost entries"), "{err}");
    }

    #[test]
    fn negative_entry_is_a_validation_error() {
        let text = "1 2 1  3 -4  1 1  5 5";
        assert!(matches!(
            parse_orlib_gap(text, ParseOptions::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn trailing_integers_rejected_only_in_strict_mode() {
        let text = format!("{MINIMAL} 7 8");
        assert!(parse_orlib_gap(&text, ParseOptions::default()).is_err());
        let lenient = ParseOptions { lenient: true };
        assert_eq!(parse_orlib_gap(&text, lenient).unwrap().len(), 1);
        let commented = format!("# gap file\n{MINIMAL}# end\n");
        assert!(parse_orlib_gap(&commented, ParseOptions::default()).is_err());
        assert_eq!(parse_orlib_gap(&commented, lenient).unwrap().len(), 1);
    }

    #[test]
    fn headerless_single_problem() {
        let inst = parse_gap_instance(&MINIMAL[2..], ParseOptions::default()).unwrap();
        assert_eq!((inst.machines(), inst.jobs()), (2, 3));
    }

    proptest! {
        #[test]
        fn write_then_parse_reproduces_integers(seed in 0u64..1000, m in 2usize..5, n in 1usize..12) {
            let inst = GapInstance::type_d(m, n, seed).unwrap();
            let text = write_orlib_gap(std::slice::from_ref(&inst));
            let back = parse_orlib_gap(&text, ParseOptions::default()).unwrap();
            prop_assert_eq!(&back[0], &inst);
            let again = write_orlib_gap(&back);
            let ints = |s: &str| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
            prop_assert_eq!(ints(&again), ints(&text));
        }
    }
}
