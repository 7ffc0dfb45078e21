//! Edge-list and label file IO.
//!
//! Two edge-list layouts are understood:
//!
//! * single file, one `layer u v` row per edge;
//! * a directory holding one `u v` file per layer, taken in lexicographic
//!   file-name order.
//!
//! Blank lines and lines starting with `#` are ignored. Node tokens are
//! arbitrary strings mapped to dense indices in order of first appearance.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ldga_core::graph::{LayerTopology, MultilayerGraph};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: expected {expected} tokens, found {found}")]
    Malformed {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}: no edges found")]
    Empty(PathBuf),
    #[error(transparent)]
    Graph(#[from] ldga_core::Error),
}

impl IoError {
    fn io(path: &Path, source: io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeListFormat {
    SingleFile,
    PerLayerFiles,
}

impl EdgeListFormat {
    /// Directories hold per-layer files, anything else is a single file.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            EdgeListFormat::PerLayerFiles
        } else {
            EdgeListFormat::SingleFile
        }
    }
}

/// Statistics reported by the loaders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub num_nodes: usize,
    pub num_layers: usize,
    pub edge_counts: Vec<usize>,
    pub self_loops_dropped: usize,
    pub duplicates_removed: usize,
}

#[derive(Default)]
struct NodeIndex {
    ids: HashMap<String, usize>,
    names: Vec<String>,
}

impl NodeIndex {
    fn get(&mut self, token: &str) -> usize {
        if let Some(&i) = self.ids.get(token) {
            return i;
        }
        let i = self.names.len();
        self.ids.insert(token.to_owned(), i);
        self.names.push(token.to_owned());
        i
    }
}

fn data_lines<'a, R: BufRead + 'a>(reader: R, path: &'a Path) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader.lines().enumerate().filter_map(move |(i, line)| match line {
        Err(e) => Some(Err(IoError::io(path, e))),
        Ok(line) => {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, trimmed.to_owned())))
            }
        }
    })
}

fn assemble(nodes: NodeIndex, layers: Vec<Vec<(usize, usize)>>, path: &Path) -> Result<(MultilayerGraph, LoadSummary)> {
    if layers.iter().all(Vec::is_empty) {
        return Err(IoError::Empty(path.to_path_buf()));
    }
    let n = nodes.names.len();
    let mut topologies = Vec::with_capacity(layers.len());
    let mut self_loops = 0;
    let mut duplicates = 0;
    for edges in layers {
        let (topology, stats) = LayerTopology::from_edges(n, edges)?;
        self_loops += stats.self_loops;
        duplicates += stats.duplicates;
        topologies.push(topology);
    }
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-loops", path.display());
    }
    let graph = MultilayerGraph::new(n, topologies)?.with_node_names(nodes.names)?;
    let summary = LoadSummary {
        num_nodes: n,
        num_layers: graph.num_layers(),
        edge_counts: graph.edge_counts(),
        self_loops_dropped: self_loops,
        duplicates_removed: duplicates,
    };
    Ok((graph, summary))
}

/// Layer tokens sort numerically when they are all integers, otherwise
/// lexicographically.
fn layer_order(tokens: impl Iterator<Item = String>) -> BTreeMap<String, usize> {
    let mut distinct: Vec<String> = tokens.collect();
    distinct.sort();
    distinct.dedup();
    if distinct.iter().all(|t| t.parse::<i64>().is_ok()) {
        distinct.sort_by_key(|t| t.parse::<i64>().unwrap_or_default());
    }
    distinct.into_iter().enumerate().map(|(i, t)| (t, i)).collect()
}

/// Parse `layer u v` rows. `path` is only used in error messages.
pub fn read_single_file<R: BufRead>(reader: R, path: &Path) -> Result<(MultilayerGraph, LoadSummary)> {
    let mut nodes = NodeIndex::default();
    let mut rows = Vec::new();
    for line in data_lines(reader, path) {
        let (number, text) = line?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line: number,
                expected: 3,
                found: tokens.len(),
            });
        }
        let u = nodes.get(tokens[1]);
        let v = nodes.get(tokens[2]);
        rows.push((tokens[0].to_owned(), u, v));
    }
    let order = layer_order(rows.iter().map(|r| r.0.clone()));
    let mut layers = vec![Vec::new(); order.len()];
    for (layer, u, v) in rows {
        layers[order[&layer]].push((u, v));
    }
    assemble(nodes, layers, path)
}

fn read_pairs<R: BufRead>(reader: R, path: &Path, nodes: &mut NodeIndex) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for line in data_lines(reader, path) {
        let (number, text) = line?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line: number,
                expected: 2,
                found: tokens.len(),
            });
        }
        edges.push((nodes.get(tokens[0]), nodes.get(tokens[1])));
    }
    Ok(edges)
}

/// Load every regular, non-hidden file of `dir` as one layer.
pub fn read_layer_dir(dir: &Path) -> Result<(MultilayerGraph, LoadSummary)> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IoError::io(dir, e))? {
        let entry = entry.map_err(|e| IoError::io(dir, e))?;
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && entry.path().is_file() {
            files.push(entry.path());
        }
    }
    files.sort();
    let mut nodes = NodeIndex::default();
    let mut layers = Vec::with_capacity(files.len());
    for file in &files {
        let handle = fs::File::open(file).map_err(|e| IoError::io(file, e))?;
        layers.push(read_pairs(BufReader::new(handle), file, &mut nodes)?);
    }
    assemble(nodes, layers, dir)
}

pub fn load_graph(path: &Path, format: EdgeListFormat) -> Result<(MultilayerGraph, LoadSummary)> {
    match format {
        EdgeListFormat::PerLayerFiles => read_layer_dir(path),
        EdgeListFormat::SingleFile => {
            let handle = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
            read_single_file(BufReader::new(handle), path)
        }
    }
}

fn node_name(graph: &MultilayerGraph, i: usize) -> String {
    match graph.node_names() {
        Some(names) => names[i].clone(),
        None => i.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| IoError::io(path, e))
}

/// Write one `u v` file per layer into `dir`; file names sort in layer order.
pub fn write_layer_dir(graph: &MultilayerGraph, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let width = graph.num_layers().to_string().len();
    let mut written = Vec::with_capacity(graph.num_layers());
    for (s, layer) in graph.layers().iter().enumerate() {
        let path = dir.join(format!("layer_{s:0width$}.txt"));
        let mut out = create(&path)?;
        for &(u, v) in layer.edges() {
            writeln!(out, "{} {}", node_name(graph, u), node_name(graph, v)).map_err(|e| IoError::io(&path, e))?;
        }
        out.flush().map_err(|e| IoError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_single_file(graph: &MultilayerGraph, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    for (s, layer) in graph.layers().iter().enumerate() {
        for &(u, v) in layer.edges() {
            writeln!(out, "{s} {} {}", node_name(graph, u), node_name(graph, v)).map_err(|e| IoError::io(path, e))?;
        }
    }
    out.flush().map_err(|e| IoError::io(path, e))
}

/// Write `node label` rows, one per node.
pub fn write_labels(graph: &MultilayerGraph, labels: &[usize], path: &Path) -> Result<()> {
    if labels.len() != graph.num_nodes() {
        return Err(ldga_core::Error::LengthMismatch {
            left: labels.len(),
            right: graph.num_nodes(),
        }
        .into());
    }
    let mut out = create(path)?;
    for (i, label) in labels.iter().enumerate() {
        writeln!(out, "{} {label}", node_name(graph, i)).map_err(|e| IoError::io(path, e))?;
    }
    out.flush().map_err(|e| IoError::io(path, e))
}

/// Read `node label` rows into a dense label vector for `graph`.
///
/// Label tokens are renumbered in order of first appearance. Every node of
/// the graph must receive exactly one label.
pub fn read_labels(graph: &MultilayerGraph, path: &Path) -> Result<Vec<usize>> {
    let handle = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let lookup: HashMap<String, usize> = (0..graph.num_nodes()).map(|i| (node_name(graph, i), i)).collect();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut labels = vec![None; graph.num_nodes()];
    let parse_err = |line, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for line in data_lines(BufReader::new(handle), path) {
        let (number, text) = line?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(IoError::Malformed {
                path: path.to_path_buf(),
                line: number,
                expected: 2,
                found: tokens.len(),
            });
        }
        let node = *lookup
            .get(tokens[0])
            .ok_or_else(|| parse_err(number, format!("unknown node {:?}", tokens[0])))?;
        let next = label_ids.len();
        let label = *label_ids.entry(tokens[1].to_owned()).or_insert(next);
        if labels[node].replace(label).is_some() {
            return Err(parse_err(number, format!("node {:?} labelled twice", tokens[0])));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| parse_err(0, format!("node {:?} has no label", node_name(graph, i)))))
        .collect()
}
