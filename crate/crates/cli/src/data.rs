//! CSV input: a header naming `y`, `x` (or `x1..xd`), `w` (or `w1..wd`) and
//! optionally `mu`, followed by one numeric row per observation.

use std::path::Path;

use npiv_core::stat::NpivData;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Y,
    X(usize),
    W(usize),
    Mu,
}

fn role(name: &str) -> Option<Role> {
    let name = name.trim().to_ascii_lowercase();
    match name.as_str() {
        "y" => return Some(Role::Y),
        "x" => return Some(Role::X(1)),
        "w" => return Some(Role::W(1)),
        "mu" => return Some(Role::Mu),
        _ => {}
    }
    let (head, tail) = name.split_at(1);
    let idx: usize = tail.parse().ok().filter(|&i| i >= 1)?;
    match head {
        "x" => Some(Role::X(idx)),
        "w" => Some(Role::W(idx)),
        _ => None,
    }
}

/// Map header cells to roles; coordinates must be numbered 1..d without gaps.
fn layout(headers: &csv::StringRecord) -> Result<(Vec<Role>, usize, usize), CliError> {
    let mut roles = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        let r = role(h).ok_or_else(|| {
            CliError::input(format!("line 1: unknown column '{h}' (expected y, x[1..], w[1..], mu)"))
        })?;
        if roles.contains(&r) {
            return Err(CliError::input(format!("line 1: duplicate column '{h}'")));
        }
        roles.push(r);
    }
    if !roles.contains(&Role::Y) {
        return Err(CliError::input("line 1: missing column 'y'"));
    }
    let dim = |pick: fn(&Role) -> Option<usize>, name: &str| -> Result<usize, CliError> {
        let mut idx: Vec<usize> = roles.iter().filter_map(pick).collect();
        idx.sort_unstable();
        if idx.is_empty() {
            return Err(CliError::input(format!("line 1: missing column '{name}'")));
        }
        if idx.iter().enumerate().any(|(k, &i)| i != k + 1) {
            return Err(CliError::input(format!(
                "line 1: '{name}' columns must be numbered 1..d without gaps"
            )));
        }
        Ok(idx.len())
    };
    let dx = dim(|r| if let Role::X(i) = r { Some(*i) } else { None }, "x")?;
    let dw = dim(|r| if let Role::W(i) = r { Some(*i) } else { None }, "w")?;
    Ok((roles, dx, dw))
}

pub fn read_data(path: &Path) -> Result<NpivData, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    parse_data(file).map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))
}

pub fn parse_data<R: std::io::Read>(reader: R) -> Result<NpivData, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::input(format!("line 1: {e}")))?
        .clone();
    let (roles, dx, dw) = layout(&headers)?;
    let has_mu = roles.contains(&Role::Mu);

    let mut data = NpivData {
        y: Vec::new(),
        x: vec![Vec::new(); dx],
        w: vec![Vec::new(); dw],
        mu: has_mu.then(Vec::new),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::input(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != roles.len() {
            return Err(CliError::input(format!(
                "line {line}: expected {} fields, found {}",
                roles.len(),
                rec.len()
            )));
        }
        for (cell, r) in rec.iter().zip(&roles) {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::input(format!("line {line}: '{cell}' is not a number"))
            })?;
            if !v.is_finite() {
                return Err(CliError::input(format!("line {line}: non-finite value '{cell}'")));
            }
            match *r {
                Role::Y => data.y.push(v),
                Role::X(i) => data.x[i - 1].push(v),
                Role::W(i) => data.w[i - 1].push(v),
                Role::Mu => {
                    if v < 0.0 {
                        return Err(CliError::input(format!("line {line}: negative weight {v}")));
                    }
                    data.mu.as_mut().expect("mu column").push(v);
                }
            }
        }
    }
    if data.y.is_empty() {
        return Err(CliError::input("no observations after the header"));
    }
    data.validate().map_err(CliError::from)?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> String {
        (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                format!("{},{},{}\n", 1.0 - t, t, t * t)
            })
            .collect()
    }

    #[test]
    fn reads_univariate_and_multivariate() {
        let d = parse_data(format!("y,x,w\n{}", rows(30)).as_bytes()).unwrap();
        assert_eq!(d.n(), 30);
        assert_eq!((d.x.len(), d.w.len()), (1, 1));
        let mut s = String::from("w2,y,x1,w1,x2\n");
        for i in 0..30 {
            let t = i as f64 / 30.0;
            s += &format!("{},{},{},{},{}\n", 1.0 - t, t, t, t * t, 0.5 * t);
        }
        let d = parse_data(s.as_bytes()).unwrap();
        assert_eq!((d.x.len(), d.w.len()), (2, 2));
        assert_eq!(d.x[1][2], 0.5 * 2.0 / 30.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut body = rows(30);
        body = body.replacen("\n", "\n0.1,abc,0.2\n", 3);
        let err = parse_data(format!("y,x,w\n{body}").as_bytes()).unwrap_err();
        assert!(err.message.contains("line 3"), "{}", err.message);
        let err = parse_data("y,x,z\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(err.message.contains("unknown column 'z'"));
        let err = parse_data("y,x1,x3,w\n".as_bytes()).unwrap_err();
        assert!(err.message.contains("without gaps"));
        let err = parse_data(format!("y,x,w\n{}1,inf,2\n", rows(25)).as_bytes()).unwrap_err();
        assert!(err.message.contains("line 27"), "{}", err.message);
    }
}
