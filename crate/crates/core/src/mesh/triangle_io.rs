//! Reader for the ASCII `.node`/`.ele` format of the Triangle mesh
//! generator. Both 0- and 1-based files are accepted; the base is detected
//! from the first node index. Attribute columns beyond boundary markers are
//! ignored. The exact accepted layout is documented in `docs/formats.md`.

use super::TriangleMesh;
use crate::error::{CoreError, Result};

struct Tokens<'a> {
    /// (1-based line number, whitespace tokens) for non-comment lines.
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                let body = l.split('#').next().unwrap_or("");
                (i + 1, body.split_whitespace().collect::<Vec<_>>())
            })
            .filter(|(_, toks)| !toks.is_empty())
            .collect();
        Self { lines, pos: 0 }
    }

    fn next_line(&mut self) -> Option<(usize, &[&'a str])> {
        let item = self.lines.get(self.pos)?;
        self.pos += 1;
        Some((item.0, &item.1))
    }
}

fn parse<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| CoreError::MeshParse {
        line,
        msg: format!("cannot parse {what} from {tok:?}"),
    })
}

/// Loads a mesh from the contents of a Triangle `.node` and `.ele` file pair.
///
/// Clockwise triangles are reoriented, boundary markers are taken from the
/// node file when its header declares them, and connectivity is validated
/// (dangling indices and zero-area triangles are reported with their line
/// numbers).
pub fn load_triangle_mesh(node_text: &str, ele_text: &str) -> Result<TriangleMesh> {
    let mut node_toks = Tokens::new(node_text);
    let (hline, header) = node_toks
        .next_line()
        .ok_or(CoreError::MeshParse {
            line: 1,
            msg: "empty .node file".into(),
        })?;
    if header.len() < 2 {
        return Err(CoreError::MeshParse {
            line: hline,
            msg: "malformed .node header: expected <#nodes> <dim> [#attrs] [#markers]".into(),
        });
    }
    let n_nodes: usize = parse(header[0], hline, "node count")?;
    let dim: usize = parse(header[1], hline, "dimension")?;
    if dim != 2 {
        return Err(CoreError::MeshParse {
            line: hline,
            msg: format!("only 2D meshes are supported, got dimension {dim}"),
        });
    }
    let n_attrs: usize = if header.len() > 2 {
        parse(header[2], hline, "attribute count")?
    } else {
        0
    };
    let has_markers = if header.len() > 3 {
        parse::<usize>(header[3], hline, "marker flag")? > 0
    } else {
        false
    };

    let mut nodes = vec![[0.0f64; 2]; n_nodes];
    let mut markers = vec![0i32; n_nodes];
    let mut base: Option<usize> = None;
    for _ in 0..n_nodes {
        let (line, toks) = node_toks.next_line().ok_or(CoreError::MeshParse {
            line: 0,
            msg: format!("unexpected end of .node file, expected {n_nodes} node lines"),
        })?;
        let need = 3 + n_attrs + usize::from(has_markers);
        if toks.len() < need {
            return Err(CoreError::MeshParse {
                line,
                msg: format!("node line has {} fields, expected {need}", toks.len()),
            });
        }
        let raw_idx: usize = parse(toks[0], line, "node index")?;
        let base_val = *base.get_or_insert(raw_idx.min(1));
        let idx = raw_idx.checked_sub(base_val).ok_or(CoreError::MeshParse {
            line,
            msg: format!("node index {raw_idx} below detected base {base_val}"),
        })?;
        if idx >= n_nodes {
            return Err(CoreError::MeshParse {
                line,
                msg: format!("node index {raw_idx} out of range for {n_nodes} nodes"),
            });
        }
        nodes[idx] = [
            parse(toks[1], line, "x coordinate")?,
            parse(toks[2], line, "y coordinate")?,
        ];
        if has_markers {
            markers[idx] = parse(toks[3 + n_attrs], line, "boundary marker")?;
        }
    }
    let base = base.unwrap_or(0);

    let mut ele_toks = Tokens::new(ele_text);
    let (hline, header) = ele_toks.next_line().ok_or(CoreError::MeshParse {
        line: 1,
        msg: "empty .ele file".into(),
    })?;
    if header.len() < 2 {
        return Err(CoreError::MeshParse {
            line: hline,
            msg: "malformed .ele header: expected <#triangles> <nodes-per-tri> [#attrs]".into(),
        });
    }
    let n_tris: usize = parse(header[0], hline, "triangle count")?;
    let per_tri: usize = parse(header[1], hline, "nodes per triangle")?;
    if per_tri != 3 {
        return Err(CoreError::MeshParse {
            line: hline,
            msg: format!("only linear triangles are supported, got {per_tri} nodes per element"),
        });
    }

    let mut triangles = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let (line, toks) = ele_toks.next_line().ok_or(CoreError::MeshParse {
            line: 0,
            msg: format!("unexpected end of .ele file, expected {n_tris} element lines"),
        })?;
        if toks.len() < 4 {
            return Err(CoreError::MeshParse {
                line,
                msg: format!("element line has {} fields, expected at least 4", toks.len()),
            });
        }
        let mut tri = [0usize; 3];
        for (slot, tok) in tri.iter_mut().zip(&toks[1..4]) {
            let raw: usize = parse(tok, line, "node reference")?;
            let idx = raw.checked_sub(base).ok_or(CoreError::MeshParse {
                line,
                msg: format!("dangling index: node reference {raw} below base {base}"),
            })?;
            if idx >= n_nodes {
                return Err(CoreError::MeshParse {
                    line,
                    msg: format!("dangling index: node reference {raw} of {n_nodes} nodes"),
                });
            }
            *slot = idx;
        }
        // Degenerate triangles are a file error here, with a line number.
        let area = {
            let (pa, pb, pc) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
        };
        if area == 0.0 {
            return Err(CoreError::MeshParse {
                line,
                msg: "zero-area triangle".into(),
            });
        }
        triangles.push(tri);
    }

    let markers = if has_markers { Some(markers) } else { None };
    TriangleMesh::new(nodes, triangles, markers)
}
