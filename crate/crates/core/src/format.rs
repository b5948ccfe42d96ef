//! Line-oriented text format for answer tables.
//!
//! ```text
//! graph path 3
//! mode gr
//! L 2
//! target 1
//! server 1: s1_1, a1+s1_2
//! server 2: s1_2+s2_2, a2+b2+s1_1+s2_1
//! server 3: s2_2, b2+s2_1
//! ```
//!
//! `graph` accepts `path N`, `cycle N`, `star N`, `complete N`, `m`, or
//! `edges N 1-2 1-3 …`. An optional `r` line lifts the graph to a multigraph,
//! and targets are then written `k,t`. Messages are letters `a`, `b`, … (`s`
//! skipped) or `w<m>_<i>`; randomness is `s<pool>_<i>` under `mode gr` and
//! `s<i>` under `mode fr`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graphs::{Family, Graph, MultiGraph};
use crate::protocol::{letter_index, message_letter, Cell, Sym, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableMode {
    Pir,
    Gr,
    Fr,
}

impl TableMode {
    pub fn name(&self) -> &'static str {
        match self {
            TableMode::Pir => "pir",
            TableMode::Gr => "gr",
            TableMode::Fr => "fr",
        }
    }
}

/// A parsed table file: one per-server cell list for each listed target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableFile {
    pub graph: MultiGraph,
    pub mode: TableMode,
    pub msg_len: usize,
    pub tables: Vec<(usize, Vec<Vec<Cell>>)>,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_num(s: &str, line: usize) -> Result<usize> {
    s.parse::<usize>().map_err(|_| perr(line, format!("expected an integer, found `{s}`")))
}

fn parse_graph(words: &[&str], line: usize) -> Result<Graph> {
    let g = match words {
        ["m"] => Ok(Graph::m_graph()),
        ["edges", n, rest @ ..] => {
            let n = parse_num(n, line)?;
            let mut edges = Vec::new();
            for e in rest {
                let (a, b) = e.split_once('-').ok_or_else(|| perr(line, format!("bad edge `{e}`")))?;
                edges.push((parse_num(a, line)?, parse_num(b, line)?));
            }
            Graph::from_edges(n, &edges)
        }
        [fam, n] => {
            let kind = Family::parse(fam).ok_or_else(|| perr(line, format!("unknown graph family `{fam}`")))?;
            Graph::family(kind, parse_num(n, line)?)
        }
        _ => return Err(perr(line, "expected `graph <family> <N>`")),
    };
    g.map_err(|e| perr(line, e.to_string()))
}

fn parse_symbol(name: &str, mode: TableMode, line: usize) -> Result<Sym> {
    let bad = || perr(line, format!("unknown symbol `{name}`"));
    let one_based = |s: &str| -> Result<usize> {
        let v = parse_num(s, line)?;
        v.checked_sub(1).ok_or_else(bad)
    };
    if let Some(rest) = name.strip_prefix('s') {
        return match (mode, rest.split_once('_')) {
            (TableMode::Gr, Some((p, i))) => Ok(Sym::Rand { pool: one_based(p)?, i: one_based(i)? }),
            (TableMode::Fr, None) => Ok(Sym::Rand { pool: 0, i: one_based(rest)? }),
            _ => Err(bad()),
        };
    }
    if let Some(rest) = name.strip_prefix('w') {
        if let Some((m, i)) = rest.split_once('_') {
            return Ok(Sym::Msg { m: one_based(m)?, i: one_based(i)? });
        }
    }
    let mut chars = name.chars();
    let c = chars.next().ok_or_else(bad)?;
    let m = letter_index(c).ok_or_else(bad)?;
    Ok(Sym::Msg { m, i: one_based(chars.as_str())? })
}

/// Parses one cell such as `a2+b2-s1_1` or `2a1+b1`.
pub fn parse_cell(text: &str, mode: TableMode, line: usize) -> Result<Cell> {
    let text: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if text.is_empty() || text == "0" {
        return Ok(Cell::default());
    }
    let mut terms = Vec::new();
    let mut rest = text.as_str();
    while !rest.is_empty() {
        let mut sign = 1i64;
        if let Some(r) = rest.strip_prefix('+') {
            rest = r;
        } else if let Some(r) = rest.strip_prefix('-') {
            sign = -1;
            rest = r;
        }
        let end = rest[1..].find(['+', '-']).map(|p| p + 1).unwrap_or(rest.len());
        let (tok, tail) = rest.split_at(end);
        rest = tail;
        let digits = tok.chars().take_while(|c| c.is_ascii_digit()).count();
        let coeff = if digits == 0 { 1 } else { parse_num(&tok[..digits], line)? as i64 };
        let name = tok[digits..].trim_start_matches('*');
        terms.push(Term { sym: parse_symbol(name, mode, line)?, coeff: sign * coeff });
    }
    Ok(Cell::new(terms))
}

pub fn symbol_name(sym: Sym, mode: TableMode) -> String {
    match sym {
        Sym::Msg { m, i } => format!("{}{}", message_letter(m), i + 1),
        Sym::Rand { pool, i } => match mode {
            TableMode::Fr => format!("s{}", i + 1),
            _ => format!("s{}_{}", pool + 1, i + 1),
        },
    }
}

pub fn format_cell(cell: &Cell, mode: TableMode) -> String {
    let mut out = String::new();
    for t in &cell.terms {
        let name = symbol_name(t.sym, mode);
        let sign = if t.coeff < 0 { "-" } else if out.is_empty() { "" } else { "+" };
        let mag = t.coeff.unsigned_abs();
        if mag == 1 {
            let _ = write!(out, "{sign}{name}");
        } else {
            let _ = write!(out, "{sign}{mag}{name}");
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn graph_line(g: &Graph) -> String {
    match g.kind() {
        Family::Custom => {
            let edges: Vec<String> = g.edges().iter().map(|&(i, j)| format!("{}-{}", i + 1, j + 1)).collect();
            format!("edges {} {}", g.n_servers(), edges.join(" "))
        }
        f => format!("{} {}", f.name(), g.n_servers()),
    }
}

fn target_text(g: &MultiGraph, m: usize) -> String {
    let (k, t) = g.bundle_of(m);
    if g.r() == 1 {
        format!("{}", k + 1)
    } else {
        format!("{},{}", k + 1, t + 1)
    }
}

impl TableFile {
    pub fn parse(text: &str) -> Result<TableFile> {
        let mut graph: Option<Graph> = None;
        let mut r = 1;
        let mut mode = None;
        let mut msg_len = None;
        let mut tables: Vec<(usize, Vec<Vec<Cell>>)> = Vec::new();
        let mut lifted: Option<MultiGraph> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("server") {
                let (n, cells) = rest
                    .split_once(':')
                    .ok_or_else(|| perr(line_no, "expected `server <n>: <cells>`"))?;
                let n = parse_num(n.trim(), line_no)?;
                let mode = mode.ok_or_else(|| perr(line_no, "`mode` must precede server lines"))?;
                let g = lifted.as_ref().ok_or_else(|| perr(line_no, "`graph` must precede server lines"))?;
                let (_, table) = tables.last_mut().ok_or_else(|| perr(line_no, "server line before any target"))?;
                if n == 0 || n > g.n_servers() {
                    return Err(perr(line_no, format!("server {n} outside 1..={}", g.n_servers())));
                }
                let cells = cells.trim();
                if !cells.is_empty() {
                    for c in cells.split(',') {
                        table[n - 1].push(parse_cell(c, mode, line_no)?);
                    }
                }
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["graph", rest @ ..] => graph = Some(parse_graph(rest, line_no)?),
                ["r", v] => r = parse_num(v, line_no)?,
                ["mode", m] => {
                    mode = Some(match *m {
                        "pir" => TableMode::Pir,
                        "gr" => TableMode::Gr,
                        "fr" => TableMode::Fr,
                        _ => return Err(perr(line_no, format!("unknown mode `{m}`"))),
                    })
                }
                ["L", v] => msg_len = Some(parse_num(v, line_no)?),
                ["target", t] => {
                    if lifted.is_none() {
                        let g = graph.clone().ok_or_else(|| perr(line_no, "`graph` must precede targets"))?;
                        lifted = Some(MultiGraph::new(g, r).map_err(|e| perr(line_no, e.to_string()))?);
                    }
                    let g = lifted.as_ref().expect("set above");
                    let m = g.parse_target(t).map_err(|e| perr(line_no, e.to_string()))?;
                    tables.push((m, vec![Vec::new(); g.n_servers()]));
                }
                _ => return Err(perr(line_no, format!("unrecognised line `{line}`"))),
            }
        }
        let graph = lifted.ok_or_else(|| perr(1, "no targets"))?;
        let mode = mode.ok_or_else(|| perr(1, "missing `mode` line"))?;
        let msg_len = msg_len.ok_or_else(|| perr(1, "missing `L` line"))?;
        Ok(TableFile { graph, mode, msg_len, tables })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "graph {}", graph_line(self.graph.base()));
        if self.graph.r() > 1 {
            let _ = writeln!(out, "r {}", self.graph.r());
        }
        let _ = writeln!(out, "mode {}", self.mode.name());
        let _ = writeln!(out, "L {}", self.msg_len);
        for (m, table) in &self.tables {
            let _ = writeln!(out, "target {}", target_text(&self.graph, *m));
            for (n, cells) in table.iter().enumerate() {
                let cells: Vec<String> = cells.iter().map(|c| format_cell(c, self.mode)).collect();
                let _ = writeln!(out, "server {}: {}", n + 1, cells.join(", "));
            }
        }
        out
    }

    pub fn table(&self, target: usize) -> Option<&Vec<Vec<Cell>>> {
        self.tables.iter().find(|(m, _)| *m == target).map(|(_, t)| t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P3: &str = "graph path 3\nmode gr\nL 2\ntarget 1\n\
        server 1: s1_1, a1+s1_2\n\
        server 2: s1_2+s2_2, a2+b2+s1_1+s2_1\n\
        server 3: s2_2, b2+s2_1\n";

    #[test]
    fn round_trip() {
        let t = TableFile::parse(P3).unwrap();
        assert_eq!(t.msg_len, 2);
        assert_eq!(t.tables.len(), 1);
        let table = t.table(0).unwrap();
        assert_eq!(table[1].len(), 2);
        assert_eq!(format_cell(&table[1][1], TableMode::Gr), "a2+b2+s1_1+s2_1");
        assert_eq!(TableFile::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn cells_with_coefficients() {
        let c = parse_cell("2a1 - b3 + s4", TableMode::Fr, 1).unwrap();
        assert_eq!(format_cell(&c, TableMode::Fr), "2a1-b3+s4");
        assert!(parse_cell("s1_1", TableMode::Fr, 1).is_err());
        assert!(parse_cell("A1", TableMode::Gr, 1).is_err());
        assert_eq!(parse_cell("w20_3", TableMode::Pir, 1).unwrap().terms[0].sym, Sym::Msg { m: 19, i: 2 });
    }

    #[test]
    fn multigraph_targets() {
        let text = "graph path 3\nr 2\nmode pir\nL 4\ntarget 2,1\nserver 1: a1\nserver 2: a1+b1\nserver 3: b2\n";
        let t = TableFile::parse(text).unwrap();
        assert_eq!(t.tables[0].0, 1);
        assert!(t.to_text().contains("target 2,1"));
    }

    #[test]
    fn errors_carry_lines() {
        let e = TableFile::parse("graph path 3\nmode gr\nL 2\ntarget 9\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 4, .. }));
        let e = TableFile::parse("graph path 3\nbogus\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }
}
