//! Tile diagrams for bipartite sets whose states live on index rectangles.

use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::oplm::LocalMeasurement;
use crate::state::{cut_matrix, Bipartition, PartySpace, StateSet};

const SUPPORT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TileKind {
    Square,
    Domino,
    Larger,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct Tile {
    /// Inclusive A index interval.
    pub a_range: (usize, usize),
    /// Inclusive B index interval.
    pub b_range: (usize, usize),
    pub members: Vec<String>,
    /// 1-based positions of the members in the set.
    pub member_indices: Vec<usize>,
    pub kind: TileKind,
    /// Other tiles holding pieces of the same entangled members.
    pub linked_to: Vec<usize>,
}

impl Tile {
    fn area(&self) -> usize {
        (self.a_range.1 - self.a_range.0 + 1) * (self.b_range.1 - self.b_range.0 + 1)
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        (self.a_range.0..=self.a_range.1).contains(&a) && (self.b_range.0..=self.b_range.1).contains(&b)
    }
}

fn kind_of(a: (usize, usize), b: (usize, usize)) -> TileKind {
    match (a.1 - a.0 + 1, b.1 - b.0 + 1) {
        (1, 1) => TileKind::Square,
        (1, 2) | (2, 1) => TileKind::Domino,
        _ => TileKind::Larger,
    }
}

fn interval(idx: &[usize]) -> Option<(usize, usize)> {
    let (lo, hi) = (*idx.first()?, *idx.last()?);
    (hi - lo + 1 == idx.len()).then_some((lo, hi))
}

type Rect = ((usize, usize), (usize, usize));

/// Connected pieces of the nonzero pattern of a state's coefficient matrix.
/// Each piece must fill a rectangle of contiguous indices; with `split`, a
/// piece may instead break into contiguous row-run x column-run rectangles.
fn pieces(m: &crate::linalg::CMatrix, label: &str, split: bool) -> Result<Vec<Rect>> {
    let (ra, rb) = (m.rows(), m.cols());
    let nz = |i: usize, j: usize| m[(i, j)].norm() > SUPPORT_TOL;
    let mut row_seen = vec![false; ra];
    let mut out = Vec::new();
    for start in 0..ra {
        if row_seen[start] || !(0..rb).any(|j| nz(start, j)) {
            continue;
        }
        let (mut rows, mut cols) = (vec![start], Vec::new());
        row_seen[start] = true;
        let mut col_seen = vec![false; rb];
        let mut k = 0;
        while k < rows.len() {
            let i = rows[k];
            for j in 0..rb {
                if nz(i, j) && !col_seen[j] {
                    col_seen[j] = true;
                    cols.push(j);
                    for i2 in 0..ra {
                        if nz(i2, j) && !row_seen[i2] {
                            row_seen[i2] = true;
                            rows.push(i2);
                        }
                    }
                }
            }
            k += 1;
        }
        rows.sort_unstable();
        cols.sort_unstable();
        let refuse = |what: &str| Error::Refused(format!("state `{label}` has {what} support rows {rows:?} cols {cols:?}"));
        if rows.iter().any(|&i| cols.iter().any(|&j| !nz(i, j))) {
            return Err(refuse("non-rectangular"));
        }
        match (interval(&rows), interval(&cols)) {
            (Some(a), Some(b)) => out.push((a, b)),
            _ if split => {
                for a in runs(&rows) {
                    for b in runs(&cols) {
                        out.push((a, b));
                    }
                }
            }
            _ => return Err(Error::Refused(format!("state `{label}` has non-contiguous support rows {rows:?} cols {cols:?}; render with linked mode"))),
        }
    }
    Ok(out)
}

/// Group states by support rectangle. With `linked`, a state whose support
/// splits into several rectangles (entangled, or wrapping across the index
/// order) contributes one linked piece to each.
pub fn extract_tiles(s: &StateSet, linked: bool) -> Result<Vec<Tile>> {
    if s.space().parties() != 2 {
        return Err(Error::Invalid("tiles need a bipartite set".into()));
    }
    let cut = Bipartition::new(vec![0], 2)?;
    let mut tiles: Vec<Tile> = Vec::new();
    let mut state_tiles: Vec<Vec<usize>> = Vec::new();
    for (n, k) in s.states().iter().enumerate() {
        let rects = pieces(&cut_matrix(k, &cut), k.label(), linked)?;
        if rects.len() > 1 && !linked {
            return Err(Error::Refused(format!(
                "state `{}` splits into {} rectangles; use linked mode",
                k.label(),
                rects.len()
            )));
        }
        let mut mine = Vec::new();
        for (a, b) in rects {
            let t = match tiles.iter().position(|t| t.a_range == a && t.b_range == b) {
                Some(t) => t,
                None => {
                    tiles.push(Tile {
                        a_range: a,
                        b_range: b,
                        members: Vec::new(),
                        member_indices: Vec::new(),
                        kind: kind_of(a, b),
                        linked_to: Vec::new(),
                    });
                    tiles.len() - 1
                }
            };
            tiles[t].members.push(k.label().to_string());
            tiles[t].member_indices.push(n + 1);
            mine.push(t);
        }
        state_tiles.push(mine);
    }
    for mine in &state_tiles {
        for &t in mine {
            for &u in mine {
                if t != u && !tiles[t].linked_to.contains(&u) {
                    tiles[t].linked_to.push(u);
                }
            }
        }
    }
    for t in &mut tiles {
        t.linked_to.sort_unstable();
    }
    Ok(tiles)
}

/// Block split of one party drawn over the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Overlay {
    pub party: usize,
    pub blocks: Vec<Vec<usize>>,
    pub labels: Vec<String>,
}

impl Overlay {
    /// From a measurement whose outcomes are diagonal projectors.
    pub fn from_measurement(m: &LocalMeasurement) -> Result<Overlay> {
        let mut blocks = Vec::new();
        for e in m.effects() {
            if !e.is_diagonal(1e-9) {
                return Err(Error::Refused(format!("outcome {} is not diagonal", m.labels[blocks.len()])));
            }
            blocks.push((0..e.rows()).filter(|&i| e[(i, i)].re > 0.5).collect());
        }
        Ok(Overlay { party: m.party, blocks, labels: m.labels.clone() })
    }

    /// The halves split used on party B of the 6x6 set.
    pub fn halves(party: usize, d: usize, names: [&str; 2]) -> Overlay {
        Overlay {
            party,
            blocks: vec![(0..d / 2).collect(), (d / 2..d).collect()],
            labels: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn block_of(&self, i: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Ascii,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Format> {
        match s {
            "ascii" => Ok(Format::Ascii),
            "svg" => Ok(Format::Svg),
            _ => Err(Error::Invalid(format!("unknown format `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RenderOptions {
    pub linked: bool,
    pub overlay: Option<Overlay>,
}

/// Tile shown in each cell: the smallest one covering it.
fn owners(tiles: &[Tile], da: usize, db: usize) -> Vec<Vec<Option<usize>>> {
    (0..da)
        .map(|a| {
            (0..db)
                .map(|b| {
                    tiles
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| t.contains(a, b))
                        .min_by_key(|(i, t)| (t.area(), *i))
                        .map(|(i, _)| i)
                })
                .collect()
        })
        .collect()
}

pub fn render(s: &StateSet, format: Format, opts: &RenderOptions) -> Result<String> {
    let tiles = extract_tiles(s, opts.linked)?;
    if let Some(o) = &opts.overlay {
        if o.party > 1 || o.blocks.iter().flatten().any(|&i| i >= s.space().dim(o.party)) {
            return Err(Error::Dimension(format!("overlay does not fit dims {:?}", s.space().party_dims())));
        }
    }
    Ok(match format {
        Format::Ascii => ascii(s, &tiles, opts.overlay.as_ref()),
        Format::Svg => svg(s, &tiles, opts.overlay.as_ref()),
    })
}

fn ascii(s: &StateSet, tiles: &[Tile], overlay: Option<&Overlay>) -> String {
    let (da, db) = (s.space().dim(0), s.space().dim(1));
    let own = owners(tiles, da, db);
    let cell = 4;
    let (h, w) = (2 * da + 1, cell * db + 1);
    let mut g = vec![vec![' '; w]; h];
    let split_b = |j: usize| overlay.is_some_and(|o| o.party == 1 && o.block_of(j - 1) != o.block_of(j));
    let split_a = |i: usize| overlay.is_some_and(|o| o.party == 0 && o.block_of(i - 1) != o.block_of(i));
    for a in 0..=da {
        for b in 0..=db {
            g[2 * a][cell * b] = '+';
        }
    }
    for a in 0..=da {
        for b in 0..db {
            let edge = a == 0 || a == da || own[a - 1][b] != own[a][b];
            let ch = if a > 0 && a < da && split_a(a) { '=' } else if edge { '-' } else { ' ' };
            for k in 1..cell {
                g[2 * a][cell * b + k] = ch;
            }
        }
    }
    for a in 0..da {
        for b in 0..=db {
            let edge = b == 0 || b == db || own[a][b - 1] != own[a][b];
            g[2 * a + 1][cell * b] = if b > 0 && b < db && split_b(b) { '#' } else if edge { '|' } else { ' ' };
        }
    }
    for (n, t) in tiles.iter().enumerate() {
        let (a, b) = (t.a_range.0, t.b_range.0);
        if own[a][b] == Some(n) {
            for (k, ch) in format!("{:>2}", n + 1).chars().take(cell - 1).enumerate() {
                g[2 * a + 1][cell * b + 1 + k] = ch;
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{} ({} x {}), rows A, columns B", s.name(), da, db);
    let mut head = String::from("    ");
    for b in 0..db {
        let _ = write!(head, "{:^width$}", b, width = cell);
    }
    let _ = writeln!(out, "{}", head.trim_end());
    for (r, row) in g.iter().enumerate() {
        let lead = if r % 2 == 1 { format!("{:>3} ", r / 2) } else { "    ".into() };
        let line: String = row.iter().collect();
        let _ = writeln!(out, "{lead}{}", line.trim_end());
    }
    if let Some(o) = overlay {
        let parts: Vec<String> = o.labels.iter().zip(&o.blocks).map(|(l, b)| format!("{l} {b:?}")).collect();
        let _ = writeln!(out, "overlay {}: {}", PartySpace::party_name(o.party), parts.join(" | "));
    }
    for (n, t) in tiles.iter().enumerate() {
        let hidden = own[t.a_range.0][t.b_range.0] != Some(n);
        let _ = writeln!(
            out,
            "tile {:>2} A {}..{} B {}..{} {:?}{}: {}",
            n + 1,
            t.a_range.0,
            t.a_range.1,
            t.b_range.0,
            t.b_range.1,
            t.kind,
            if hidden { " (underneath)" } else { "" },
            t.members.join(" ")
        );
        for &u in t.linked_to.iter().filter(|&&u| u > n) {
            let _ = writeln!(out, "  linked to tile {}", u + 1);
        }
    }
    out
}

fn color(key: &str) -> String {
    let h = Sha256::digest(key.as_bytes());
    // keep colors light so labels stay readable
    format!("#{:02x}{:02x}{:02x}", 128 + h[0] / 2, 128 + h[1] / 2, 128 + h[2] / 2)
}

fn runs(idx: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &i in idx {
        match out.last_mut() {
            Some(r) if r.1 + 1 == i => r.1 = i,
            _ => out.push((i, i)),
        }
    }
    out
}

fn svg(s: &StateSet, tiles: &[Tile], overlay: Option<&Overlay>) -> String {
    let (da, db) = (s.space().dim(0), s.space().dim(1));
    let (c, m) = (40usize, 30usize);
    let (w, h) = (2 * m + c * db, 2 * m + c * da);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, "<title>{}</title>", s.name());
    let _ = writeln!(out, r##"<g class="grid" stroke="#bbb" stroke-width="1">"##);
    for a in 0..=da {
        let _ = writeln!(out, r#"<line x1="{m}" y1="{y}" x2="{x2}" y2="{y}"/>"#, y = m + c * a, x2 = m + c * db);
    }
    for b in 0..=db {
        let _ = writeln!(out, r#"<line x1="{x}" y1="{m}" x2="{x}" y2="{y2}"/>"#, x = m + c * b, y2 = m + c * da);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g class="axes" font-family="monospace" font-size="12" text-anchor="middle">"#);
    for b in 0..db {
        let _ = writeln!(out, r#"<text x="{}" y="{}">{b}</text>"#, m + c * b + c / 2, m - 10);
    }
    for a in 0..da {
        let _ = writeln!(out, r#"<text x="{}" y="{}">{a}</text>"#, m - 12, m + c * a + c / 2 + 4);
    }
    let _ = writeln!(out, "</g>");
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(tiles[i].area()), i));
    let _ = writeln!(out, r#"<g class="tiles" font-family="monospace" font-size="11" text-anchor="middle">"#);
    for i in order {
        let t = &tiles[i];
        let key = match overlay {
            Some(o) => {
                let r = if o.party == 0 { t.a_range } else { t.b_range };
                format!("{:?}", (r.0..=r.1).map(|k| o.block_of(k)).collect::<Vec<_>>())
            }
            None => format!("{i}"),
        };
        let (x, y) = (m + c * t.b_range.0, m + c * t.a_range.0);
        let (tw, th) = (c * (t.b_range.1 - t.b_range.0 + 1), c * (t.a_range.1 - t.a_range.0 + 1));
        let _ = writeln!(
            out,
            r#"<rect class="tile" x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="black" stroke-width="2"/>"#,
            x + 3,
            y + 3,
            tw - 6,
            th - 6,
            color(&key)
        );
        let label = t.member_indices.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, r#"<text x="{}" y="{}">{label}</text>"#, x + tw / 2, y + th / 2 + 4);
    }
    let _ = writeln!(out, "</g>");
    let center = |t: &Tile| {
        (
            m + c * t.b_range.0 + c * (t.b_range.1 - t.b_range.0 + 1) / 2,
            m + c * t.a_range.0 + c * (t.a_range.1 - t.a_range.0 + 1) / 2,
        )
    };
    for (i, t) in tiles.iter().enumerate() {
        for &u in t.linked_to.iter().filter(|&&u| u > i) {
            let ((x1, y1), (x2, y2)) = (center(t), center(&tiles[u]));
            let _ = writeln!(
                out,
                r#"<line class="link" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="black" stroke-dasharray="2,3"/>"#
            );
        }
    }
    if let Some(o) = overlay {
        let _ = writeln!(out, r#"<g class="overlay" fill="none" stroke="crimson" stroke-width="3" stroke-dasharray="8,4">"#);
        for (b, l) in o.blocks.iter().zip(&o.labels) {
            for (lo, hi) in runs(b) {
                let (x, y, rw, rh) = if o.party == 1 {
                    (m + c * lo, m, c * (hi - lo + 1), c * da)
                } else {
                    (m, m + c * lo, c * db, c * (hi - lo + 1))
                };
                let _ = writeln!(out, r#"<rect x="{x}" y="{y}" width="{rw}" height="{rh}"><title>{l}</title></rect>"#);
            }
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}
