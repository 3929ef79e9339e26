//! Line-delimited JSON dataset files.
//!
//! The first line is a header object; every following line is one graph:
//!
//! ```text
//! {"format":"twopiece-graphs","version":1,"a":0.8,"b_train":0.9,...,"counts":[n_train,n_val,n_test]}
//! {"split":"train","num_nodes":24,"edges":[[0,1],...],"features":[[1.0],...],"label":0,"inv_mask":[...],"bits":{...},"env_id":0}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::SyntheticGraph;
use crate::scm::BitRecord;
use crate::synth::{DatasetSplit, SplitParams};
use crate::{Error, Result};

pub const FORMAT_NAME: &str = "twopiece-graphs";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    a: f64,
    b_train: f64,
    b_val: f64,
    b_test: f64,
    seed: u64,
    per_class: usize,
    counts: [usize; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    split: String,
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
    label: usize,
    inv_mask: Vec<bool>,
    bits: BitRecord,
    env_id: usize,
}

pub fn write_dataset<W: Write>(split: &DatasetSplit, mut out: W) -> Result<()> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        a: split.params.a,
        b_train: split.params.b_train,
        b_val: split.params.b_val,
        b_test: split.params.b_test,
        seed: split.seed,
        per_class: split.per_class,
        counts: [split.train.len(), split.val.len(), split.test.len()],
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::other)?;
    out.write_all(b"\n")?;
    for (name, part) in split.parts() {
        for g in part {
            let rec = Record {
                split: name.into(),
                num_nodes: g.num_nodes,
                edges: g.edges.clone(),
                features: g.node_features.clone(),
                label: g.label,
                inv_mask: g.inv_edge_mask.clone(),
                bits: g.bits,
                env_id: g.env_id,
            };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn serialize_dataset(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(split, BufWriter::new(File::create(path)?))
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<DatasetSplit> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| Error::Corrupt("empty file".into()))??;
    let raw: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| Error::Corrupt(format!("header: {e}")))?;
    // check the version before the rest of the header so newer layouts
    // report as a version problem rather than as corruption
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v > FORMAT_VERSION as u64 => {
            return Err(Error::Version { found: v as u32, supported: FORMAT_VERSION })
        }
        Some(_) => {}
        None => return Err(Error::Corrupt("header has no version".into())),
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| Error::Corrupt(format!("header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(Error::Corrupt(format!("unknown format {:?}", header.format)));
    }

    let mut parts: [Vec<SyntheticGraph>; 3] = Default::default();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::Corrupt(format!("record {}: {e}", lineno + 1)))?;
        let slot = match rec.split.as_str() {
            "train" => 0,
            "val" => 1,
            "test" => 2,
            other => return Err(Error::Corrupt(format!("unknown split {other:?}"))),
        };
        let g = SyntheticGraph {
            num_nodes: rec.num_nodes,
            edges: rec.edges,
            node_features: rec.features,
            label: rec.label,
            inv_edge_mask: rec.inv_mask,
            bits: rec.bits,
            env_id: rec.env_id,
        };
        g.validate().map_err(|e| Error::Corrupt(format!("record {}: {e}", lineno + 1)))?;
        parts[slot].push(g);
    }
    let counts = [parts[0].len(), parts[1].len(), parts[2].len()];
    if counts != header.counts {
        return Err(Error::Corrupt(format!("expected {:?} graphs, found {:?}", header.counts, counts)));
    }
    let [train, val, test] = parts;
    Ok(DatasetSplit {
        train,
        val,
        test,
        params: SplitParams {
            a: header.a,
            b_train: header.b_train,
            b_val: header.b_val,
            b_test: header.b_test,
        },
        seed: header.seed,
        per_class: header.per_class,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetSplit> {
    read_dataset(BufReader::new(File::open(path)?))
}
