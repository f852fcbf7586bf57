//! Result artifacts: topic distribution table, inter-topic dendrogram and
//! 2-D scatter export.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusterer::{ClusterAssignment, NOISE};
use crate::format::fmt_f;
use crate::labeler::OUTLIER_LABEL;
use crate::matrix::{cosine_similarity, norm, Matrix};
use crate::reducer::{reduce, ReduceError, ReducerConfig};
use crate::scalar::Scalar;
use crate::topics::TopicModel;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("a dendrogram needs at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("scatter reduction: {0}")]
    Reduce(#[from] ReduceError),
    #[error("malformed scatter csv: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub topic_id: i32,
    pub label: String,
    pub count: usize,
    /// Percentage of all sentences in hundredths of a percent.
    pub hundredths: u64,
}

impl TableRow {
    pub fn percentage(&self) -> f64 {
        self.hundredths as f64 / 100.0
    }

    pub fn percentage_text(&self) -> String {
        format!("{}.{:02}", self.hundredths / 100, self.hundredths % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicTable {
    pub rows: Vec<TableRow>,
    pub total: usize,
}

/// `100 · count / total` rounded half-up to two decimals, in hundredths.
pub fn percent_hundredths(count: usize, total: usize) -> u64 {
    if total == 0 {
        return 0;
    }
    let (c, n) = (count as u128, total as u128);
    ((2 * c * 10_000 + n) / (2 * n)) as u64
}

impl TopicTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "topic_id,label,count,percentage")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.topic_id, csv_field(&r.label), r.count, r.percentage_text())?;
        }
        writeln!(w, ",Total,{},100.00", self.total)
    }

    pub fn percentage_sum_hundredths(&self) -> u64 {
        self.rows.iter().map(|r| r.hundredths).sum()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per topic plus an outlier row when outliers remain, sorted by
/// count descending (ties: topic id ascending, outliers last).
pub fn topic_table(model: &TopicModel) -> TopicTable {
    let total = model.n_sentences();
    let mut rows: Vec<TableRow> = model
        .topics
        .iter()
        .map(|t| TableRow {
            topic_id: t.id as i32,
            label: t.label.clone(),
            count: t.size,
            hundredths: percent_hundredths(t.size, total),
        })
        .collect();
    if model.outlier_count > 0 {
        rows.push(TableRow {
            topic_id: NOISE,
            label: OUTLIER_LABEL.into(),
            count: model.outlier_count,
            hundredths: percent_hundredths(model.outlier_count, total),
        });
    }
    rows.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then((a.topic_id == NOISE).cmp(&(b.topic_id == NOISE)))
            .then(a.topic_id.cmp(&b.topic_id))
    });
    balance_percentages(&mut rows, total);
    TopicTable { rows, total }
}

/// Rows are rounded independently, which keeps small tables identical to
/// hand-computed ones, but many rows can drift past one hundredth. Drift
/// beyond that is pushed back by moving the rows whose rounding was
/// closest to the other way; every row stays on the floor or ceiling of its
/// exact value.
fn balance_percentages(rows: &mut [TableRow], total: usize) {
    if total == 0 || rows.is_empty() {
        return;
    }
    let remainder = |r: &TableRow| (r.count as u128 * 10_000) % total as u128;
    let exact_floor = |r: &TableRow| (r.count as u128 * 10_000 / total as u128) as u64;
    let mut drift = rows.iter().map(|r| r.hundredths as i64).sum::<i64>() - 10_000;
    while drift > 1 {
        let Some(i) = (0..rows.len())
            .filter(|&i| rows[i].hundredths > exact_floor(&rows[i]))
            .min_by_key(|&i| remainder(&rows[i]))
        else {
            break;
        };
        rows[i].hundredths -= 1;
        drift -= 1;
    }
    while drift < -1 {
        let Some(i) = (0..rows.len())
            .filter(|&i| rows[i].hundredths == exact_floor(&rows[i]) && remainder(&rows[i]) > 0)
            .max_by_key(|&i| (remainder(&rows[i]), std::cmp::Reverse(i)))
        else {
            break;
        };
        rows[i].hundredths += 1;
        drift += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            other => Err(format!("unknown linkage {other:?} (expected average, complete or single)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub node_a: usize,
    pub node_b: usize,
    pub distance: f64,
    pub new_node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub linkage: Linkage,
    pub n_leaves: usize,
    /// Leaves are topic ids `0..n_leaves`; merge `k` creates node `n_leaves + k`.
    pub merges: Vec<Merge>,
}

/// Cosine distance `1 − cos`, floored at 0; a zero row is at distance 1
/// from everything.
pub fn cosine_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    if norm(a) == T::zero() || norm(b) == T::zero() {
        return 1.0;
    }
    (1.0 - cosine_similarity(a, b).as_f64()).max(0.0)
}

/// Agglomerative clustering of topic rows over cosine distance with a
/// Lance-Williams update. Among equal distances the pair whose smallest
/// leaf ids are smallest merges first.
pub fn topic_dendrogram<T: Scalar>(rows: &Matrix<T>, linkage: Linkage) -> Result<Dendrogram, ReportError> {
    let m = rows.nrows();
    if m < 2 {
        return Err(ReportError::TooFewTopics(m));
    }
    let mut d = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v = cosine_distance(rows.row(i), rows.row(j));
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    // slot -> (node id, size, smallest leaf)
    let mut active: Vec<Option<(usize, usize, usize)>> = (0..m).map(|i| Some((i, 1, i))).collect();
    let mut merges = Vec::with_capacity(m - 1);
    for step in 0..m - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..m {
            let Some((_, _, li)) = active[i] else { continue };
            for j in (i + 1)..m {
                let Some((_, _, lj)) = active[j] else { continue };
                let key = (d[i][j], li.min(lj), li.max(lj), i, j);
                let better = match best {
                    None => true,
                    Some(b) => key.0 < b.0 || (key.0 == b.0 && (key.1, key.2) < (b.1, b.2)),
                };
                if better {
                    best = Some(key);
                }
            }
        }
        let (dist, _, _, i, j) = best.expect("two active clusters remain");
        let (ni, si, li) = active[i].expect("active");
        let (nj, sj, lj) = active[j].expect("active");
        for k in 0..m {
            if k == i || k == j || active[k].is_none() {
                continue;
            }
            let v = match linkage {
                Linkage::Average => (si as f64 * d[k][i] + sj as f64 * d[k][j]) / (si + sj) as f64,
                Linkage::Complete => d[k][i].max(d[k][j]),
                Linkage::Single => d[k][i].min(d[k][j]),
            };
            d[k][i] = v;
            d[i][k] = v;
        }
        let new_node = m + step;
        active[i] = Some((new_node, si + sj, li.min(lj)));
        active[j] = None;
        merges.push(Merge {
            node_a: ni.min(nj),
            node_b: ni.max(nj),
            distance: dist,
            new_node,
        });
    }
    Ok(Dendrogram { linkage, n_leaves: m, merges })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub sentence_id: usize,
    pub x: f64,
    pub y: f64,
    pub topic_id: i32,
    pub topic_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterExport {
    pub rows: Vec<ScatterRow>,
}

fn label_for(model: Option<&TopicModel>, topic: i32) -> String {
    if topic == NOISE {
        return OUTLIER_LABEL.to_string();
    }
    model
        .and_then(|m| m.topics.get(topic as usize))
        .map(|t| t.label.clone())
        .unwrap_or_default()
}

/// Dedicated 2-component reduction of the original embeddings, one row per
/// sentence including outliers.
pub fn scatter_2d(
    embeddings: &Matrix<f64>,
    assignment: &ClusterAssignment,
    model: Option<&TopicModel>,
    base: &ReducerConfig,
    seed: u64,
) -> Result<ScatterExport, ReportError> {
    let cfg = ReducerConfig {
        n_components: 2,
        seed,
        ..base.clone()
    };
    let coords = reduce(embeddings, &cfg)?.coords;
    let rows = (0..embeddings.nrows())
        .map(|i| {
            let topic = assignment.labels[i];
            ScatterRow {
                sentence_id: i,
                x: coords.get(i, 0),
                y: coords.get(i, 1),
                topic_id: topic,
                topic_label: label_for(model, topic),
            }
        })
        .collect();
    Ok(ScatterExport { rows })
}

impl ScatterExport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sentence_id,x,y,topic_id,topic_label")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.sentence_id, fmt_f(r.x), fmt_f(r.y), r.topic_id, csv_field(&r.topic_label))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, ReportError> {
        let mut reader = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in reader.deserialize::<ScatterRow>() {
            rows.push(rec.map_err(|e| ReportError::Parse(e.to_string()))?);
        }
        Ok(Self { rows })
    }

    /// Static SVG: one circle per sentence, categorical colours, legend.
    pub fn to_svg(&self) -> String {
        const PALETTE: [&str; 10] = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#7f7f7f",
        ];
        const NOISE_COLOUR: &str = "#c8c8c8";
        let (w, h, pad, legend_w) = (800.0, 600.0, 20.0, 220.0);
        let xs = self.rows.iter().map(|r| r.x);
        let ys = self.rows.iter().map(|r| r.y);
        let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let sx = if x1 > x0 { (w - legend_w - 2.0 * pad) / (x1 - x0) } else { 1.0 };
        let sy = if y1 > y0 { (h - 2.0 * pad) / (y1 - y0) } else { 1.0 };
        let colour = |t: i32| if t == NOISE { NOISE_COLOUR } else { PALETTE[t as usize % PALETTE.len()] };

        let mut svg = String::new();
        let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        // noise first so topics draw on top
        let mut order: Vec<&ScatterRow> = self.rows.iter().collect();
        order.sort_by_key(|r| (r.topic_id != NOISE, r.sentence_id));
        for r in order {
            let cx = pad + (r.x - x0) * sx;
            let cy = h - pad - (r.y - y0) * sy;
            let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#, colour(r.topic_id));
        }
        let mut legend: Vec<(i32, &str)> = self.rows.iter().map(|r| (r.topic_id, r.topic_label.as_str())).collect();
        legend.sort_by_key(|&(t, _)| if t == NOISE { i32::MAX } else { t });
        legend.dedup_by_key(|e| e.0);
        for (k, (t, label)) in legend.iter().enumerate() {
            let y = pad + 18.0 * k as f64;
            let x = w - legend_w + pad;
            let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="5" fill="{}"/>"#, colour(*t));
            let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, x + 10.0, y + 4.0, xml_escape(label));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::Topic;

    fn model_with(sizes: &[usize], outliers: usize) -> TopicModel {
        let n: usize = sizes.iter().sum::<usize>() + outliers;
        let mut labels = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat(c as i32).take(s));
        }
        labels.extend(std::iter::repeat(NOISE).take(outliers));
        TopicModel {
            topics: sizes
                .iter()
                .enumerate()
                .map(|(id, &size)| Topic { id, keywords: vec![], size, representatives: vec![], label: format!("T{id}") })
                .collect(),
            vocabulary: vec![],
            ctfidf: vec![],
            outlier_count: outliers,
            assignment: ClusterAssignment { probabilities: vec![1.0; n], labels },
        }
    }

    #[test]
    fn table_examples() {
        assert_eq!(percent_hundredths(113, 680), 1662);
        let t = topic_table(&model_with(&[3, 1], 0));
        assert_eq!(t.rows.iter().map(|r| r.percentage_text()).collect::<Vec<_>>(), vec!["75.00", "25.00"]);
        let one = topic_table(&model_with(&[7], 0));
        assert_eq!(one.rows[0].percentage_text(), "100.00");
    }

    #[test]
    fn many_rows_keep_the_sum_within_one_hundredth() {
        // seven rows each rounding up by almost half a hundredth
        let t = topic_table(&model_with(&[130, 179, 145, 163, 15, 174, 185], 67));
        assert_eq!(t.percentage_sum_hundredths(), 10_001);
        // a table already within one hundredth is left as rounded
        let hs = topic_table(&model_with(&[113, 99, 99, 90, 42, 37, 28, 26, 21, 14, 13, 12, 11], 75));
        assert_eq!(hs.percentage_sum_hundredths(), 10_001);
        assert!(hs.rows.iter().all(|r| r.hundredths == percent_hundredths(r.count, 680)));
    }

    proptest::proptest! {
        #[test]
        fn percentages_stay_within_bounds(counts in proptest::collection::vec(1usize..500, 1..30), outliers in 0usize..300) {
            let t = topic_table(&model_with(&counts, outliers));
            let sum = t.percentage_sum_hundredths() as i64;
            proptest::prop_assert!((sum - 10_000).abs() <= 1);
            for r in &t.rows {
                let floor = (r.count * 10_000 / t.total) as u64;
                proptest::prop_assert!(r.hundredths == floor || r.hundredths == floor + 1);
            }
        }
    }

    #[test]
    fn table_sorted_with_outlier_row_and_total() {
        let t = topic_table(&model_with(&[2, 5, 3], 5));
        let ids: Vec<i32> = t.rows.iter().map(|r| r.topic_id).collect();
        assert_eq!(ids, vec![1, -1, 2, 0]);
        assert_eq!(t.rows[1].label, OUTLIER_LABEL);
        assert_eq!(t.total, 15);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with(",Total,15,100.00\n"));
    }

    #[test]
    fn identical_and_orthogonal_rows() {
        let same = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![2.0, 4.0]]).unwrap();
        let d = topic_dendrogram(&same, Linkage::Average).unwrap();
        assert!(d.merges[0].distance.abs() < 1e-12);
        let orth = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 3.0]]).unwrap();
        let d = topic_dendrogram(&orth, Linkage::Average).unwrap();
        assert!((d.merges[0].distance - 1.0).abs() < 1e-12);
        assert!(matches!(
            topic_dendrogram(&Matrix::from_rows(&[vec![1.0f64]]).unwrap(), Linkage::Average),
            Err(ReportError::TooFewTopics(1))
        ));
    }

    #[test]
    fn dendrogram_structure() {
        let rows = Matrix::from_rows(&[
            vec![1.0f64, 0.0, 0.0],
            vec![0.9, 0.1, 0.0],
            vec![0.0, 1.0, 0.2],
            vec![0.0, 0.8, 0.6],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Single] {
            let d = topic_dendrogram(&rows, linkage).unwrap();
            assert_eq!(d.merges.len(), 4);
            assert!(d.merges.windows(2).all(|w| w[0].distance <= w[1].distance + 1e-12));
            assert!(d.merges.iter().all(|m| (0.0..=1.0 + 1e-12).contains(&m.distance)));
            assert_eq!(d.merges[0].node_a, 0);
            assert_eq!(d.merges[0].node_b, 1);
        }
    }

    #[test]
    fn tie_goes_to_smaller_leaf() {
        // three mutually orthogonal rows: every distance is 1
        let rows = Matrix::from_rows(&[vec![0.0f64, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let d = topic_dendrogram(&rows, Linkage::Average).unwrap();
        assert_eq!((d.merges[0].node_a, d.merges[0].node_b), (0, 1));
        assert_eq!((d.merges[1].node_a, d.merges[1].node_b), (2, 3));
    }

    #[test]
    fn linkage_parses() {
        assert_eq!("Complete".parse::<Linkage>().unwrap(), Linkage::Complete);
        assert!("ward".parse::<Linkage>().is_err());
    }

    #[test]
    fn scatter_rows_round_trip() {
        let emb = Matrix::from_rows(
            &(0..30)
                .map(|i| {
                    let t = i as f64;
                    vec![(t * 0.3).sin(), (t * 0.7).cos(), (t * 0.11).sin() + if i < 15 { 2.0 } else { -2.0 }]
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let labels: Vec<i32> = (0..30).map(|i| if i == 29 { NOISE } else { (i / 15) as i32 }).collect();
        let assignment = ClusterAssignment { probabilities: vec![1.0; 30], labels: labels.clone() };
        let base = ReducerConfig { n_neighbors: 5, n_epochs: 50, ..ReducerConfig::default() };
        let s = scatter_2d(&emb, &assignment, None, &base, 3).unwrap();
        assert_eq!(s.rows.len(), 30);
        assert_eq!(s.rows[29].topic_label, OUTLIER_LABEL);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ScatterExport::read_csv(&buf[..]).unwrap();
        assert_eq!(back.rows.iter().map(|r| r.topic_id).collect::<Vec<_>>(), labels);
        let again = scatter_2d(&emb, &assignment, None, &base, 3).unwrap();
        let mut buf2 = Vec::new();
        again.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
        let svg = s.to_svg();
        assert_eq!(svg.matches("r=\"3\"").count(), 30);
        assert!(svg.contains(OUTLIER_LABEL));
    }
}
