//! CSV tables read and written by the pipeline.

use std::path::Path;

use owa_core::cluster::{ClusterSummary, MergeTree, SegmentRow, VarianceRatio};
use owa_core::criteria::{CapacityMatrix, ExpertVotes};
use owa_core::{DecisionPoint, OrderWeights};

use crate::error::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::csv(path))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::csv(path))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(Error::csv(path))?;
    for row in rows {
        w.write_record(row).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Data(format!("{}: missing column {name:?}", path.display())))
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, line: usize, path: &Path) -> Result<&'a str> {
    rec.get(i)
        .ok_or_else(|| Error::Data(format!("{}:{line}: short row", path.display())))
}

fn number<T: std::str::FromStr>(s: &str, what: &str, line: usize, path: &Path) -> Result<T> {
    s.parse().map_err(|_| {
        Error::Data(format!(
            "{}:{line}: {what} {s:?} is not a number",
            path.display()
        ))
    })
}

/// `index, r, t`.
pub fn write_design(path: &Path, points: &[DecisionPoint]) -> Result<()> {
    write_rows(
        path,
        &["index", "r", "t"],
        points
            .iter()
            .enumerate()
            .map(|(i, p)| [i.to_string(), p.r.to_string(), p.t.to_string()]),
    )
}

pub fn read_design(path: &Path) -> Result<Vec<DecisionPoint>> {
    let mut rd = reader(path)?;
    let headers = rd.headers().map_err(Error::csv(path))?.clone();
    let (ri, ti) = (column(&headers, "r", path)?, column(&headers, "t", path)?);
    let mut points = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(Error::csv(path))?;
        let line = n + 2;
        let r = number(field(&rec, ri, line, path)?, "r", line, path)?;
        let t = number(field(&rec, ti, line, path)?, "t", line, path)?;
        points.push(DecisionPoint::new(r, t));
    }
    Ok(points)
}

/// `index, w_1, ..., w_n`.
pub fn write_weights(path: &Path, weights: &[OrderWeights]) -> Result<()> {
    let n = weights.first().map_or(0, OrderWeights::len);
    let mut header = vec!["index".to_string()];
    header.extend((1..=n).map(|j| format!("w_{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        path,
        &header,
        weights.iter().enumerate().map(|(i, w)| {
            std::iter::once(i.to_string()).chain(w.as_slice().iter().map(f64::to_string))
        }),
    )
}

/// `index, r, t` of the stored maps; empty coordinates for literal weights.
pub fn write_map_index(path: &Path, provenance: &[Option<DecisionPoint>]) -> Result<()> {
    write_rows(
        path,
        &["index", "r", "t"],
        provenance.iter().enumerate().map(|(i, p)| match p {
            Some(p) => [i.to_string(), p.r.to_string(), p.t.to_string()],
            None => [i.to_string(), String::new(), String::new()],
        }),
    )
}

pub fn read_map_index(path: &Path) -> Result<Vec<Option<DecisionPoint>>> {
    let mut rd = reader(path)?;
    let headers = rd.headers().map_err(Error::csv(path))?.clone();
    let (ri, ti) = (column(&headers, "r", path)?, column(&headers, "t", path)?);
    let mut out = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(Error::csv(path))?;
        let line = n + 2;
        let (r, t) = (field(&rec, ri, line, path)?, field(&rec, ti, line, path)?);
        out.push(if r.is_empty() && t.is_empty() {
            None
        } else {
            Some(DecisionPoint::new(
                number(r, "r", line, path)?,
                number(t, "t", line, path)?,
            ))
        });
    }
    Ok(out)
}

/// `step, a, b, height, size`; the node made at `step` has id `leaves + step`.
pub fn write_merge_tree(path: &Path, tree: &MergeTree) -> Result<()> {
    write_rows(
        path,
        &["step", "a", "b", "height", "size"],
        tree.merges.iter().enumerate().map(|(s, m)| {
            [
                s.to_string(),
                m.a.to_string(),
                m.b.to_string(),
                m.height.to_string(),
                m.size.to_string(),
            ]
        }),
    )
}

pub fn write_variance_curve(path: &Path, curve: &[VarianceRatio]) -> Result<()> {
    write_rows(
        path,
        &["k", "ratio", "within", "within_from_between", "total"],
        curve.iter().map(|c| {
            [
                c.k.to_string(),
                c.ratio.to_string(),
                c.within.to_string(),
                c.within_from_between.to_string(),
                c.total.to_string(),
            ]
        }),
    )
}

pub fn write_segmentation(path: &Path, rows: &[SegmentRow]) -> Result<()> {
    write_rows(
        path,
        &["index", "r", "t", "label"],
        rows.iter().map(|s| {
            [
                s.index.to_string(),
                s.r.to_string(),
                s.t.to_string(),
                s.label.to_string(),
            ]
        }),
    )
}

/// One row per cluster: id, size, centroid, global mean of the mean map, members.
pub fn write_clusters(path: &Path, summary: &ClusterSummary) -> Result<()> {
    write_rows(
        path,
        &[
            "id",
            "size",
            "centroid_r",
            "centroid_t",
            "global_mean",
            "members",
        ],
        summary.clusters.iter().map(|c| {
            let members: Vec<String> = c.members.iter().map(usize::to_string).collect();
            [
                c.id.to_string(),
                c.size().to_string(),
                c.centroid.r.to_string(),
                c.centroid.t.to_string(),
                c.global_mean().to_string(),
                members.join(" "),
            ]
        }),
    )
}

/// `expert_id, luc_class, service, score`.
pub fn read_capacity(path: &Path, score_max: f64) -> Result<CapacityMatrix> {
    let mut m = CapacityMatrix::new(score_max)?;
    let mut rd = reader(path)?;
    let headers = rd.headers().map_err(Error::csv(path))?.clone();
    let cols = ["expert_id", "luc_class", "service", "score"]
        .map(|c| column(&headers, c, path))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(Error::csv(path))?;
        let line = n + 2;
        let expert = field(&rec, cols[0], line, path)?;
        let class = number(field(&rec, cols[1], line, path)?, "luc_class", line, path)?;
        let service = field(&rec, cols[2], line, path)?;
        let score = number(field(&rec, cols[3], line, path)?, "score", line, path)?;
        m.insert(expert, class, service, score)
            .map_err(|e| Error::Data(format!("{}:{line}: {e}", path.display())))?;
    }
    Ok(m)
}

/// `service, votes, total, override_weight` (last column optional).
pub fn read_votes(path: &Path) -> Result<Vec<ExpertVotes>> {
    let mut rd = reader(path)?;
    let headers = rd.headers().map_err(Error::csv(path))?.clone();
    let si = column(&headers, "service", path)?;
    let vi = column(&headers, "votes", path)?;
    let ti = column(&headers, "total", path)?;
    let oi = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("override_weight"));
    let mut out = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(Error::csv(path))?;
        let line = n + 2;
        let override_weight = match oi.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()) {
            Some(s) => Some(number(s, "override_weight", line, path)?),
            None => None,
        };
        out.push(ExpertVotes {
            service: field(&rec, si, line, path)?.to_string(),
            count: number(field(&rec, vi, line, path)?, "votes", line, path)?,
            total: number(field(&rec, ti, line, path)?, "total", line, path)?,
            override_weight,
        });
    }
    Ok(out)
}

pub fn write_votes(path: &Path, votes: &[ExpertVotes]) -> Result<()> {
    write_rows(
        path,
        &["service", "votes", "total", "override_weight"],
        votes.iter().map(|v| {
            [
                v.service.clone(),
                v.count.to_string(),
                v.total.to_string(),
                v.override_weight.map(|w| w.to_string()).unwrap_or_default(),
            ]
        }),
    )
}
