use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// One subject's multichannel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub subject: String,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    /// `channels[k][i]` is sample `i` of channel `k`.
    pub channels: Vec<Vec<f64>>,
    /// Per-sample activity label; `None` marks unlabeled samples.
    pub labels: Vec<Option<String>>,
    /// Sample times in seconds.
    pub t: Vec<f64>,
}

impl SensorStream {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.t.len() != n || self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::Data(format!(
                "stream `{}`: channel, label and time series differ in length",
                self.subject
            )));
        }
        if self.channel_names.len() != self.channels.len() {
            return Err(Error::Data(format!("stream `{}`: channel names do not match channels", self.subject)));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Data(format!("stream `{}`: sample rate must be positive", self.subject)));
        }
        Ok(())
    }
}

fn csv_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Csv { line, msg: msg.into() }
}

struct Pending {
    subject: String,
    t: Vec<f64>,
    labels: Vec<Option<String>>,
    channels: Vec<Vec<f64>>,
    first_line: usize,
}

fn finish(p: Pending, names: &[String]) -> Result<SensorStream> {
    let n = p.t.len();
    if n < 2 {
        return Err(csv_err(
            p.first_line,
            format!("subject `{}` has a single row; the sample rate cannot be inferred", p.subject),
        ));
    }
    let span = p.t[n - 1] - p.t[0];
    if !(span > 0.0) {
        return Err(csv_err(p.first_line, format!("subject `{}`: time does not increase", p.subject)));
    }
    Ok(SensorStream {
        subject: p.subject,
        sample_rate_hz: (n - 1) as f64 / span,
        channel_names: names.to_vec(),
        channels: p.channels,
        labels: p.labels,
        t: p.t,
    })
}

/// Parses the `subject,label,t,ch0,...,chK` schema. Rows of one subject must be
/// contiguous and ordered by time; an empty label marks an unlabeled sample.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<SensorStream>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(csv_err(1, "no data rows")),
        Some(r) => r.map_err(|e| csv_err(1, e.to_string()))?,
    };
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 4 || cols[..3] != ["subject", "label", "t"] {
        return Err(csv_err(1, format!("unknown header `{}`; expected subject,label,t,ch0,...", cols.join(","))));
    }
    for (k, name) in cols[3..].iter().enumerate() {
        if *name != format!("ch{k}") {
            return Err(csv_err(1, format!("unknown header column `{name}`; expected `ch{k}`")));
        }
    }
    let names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
    let n_ch = names.len();
    let mut streams: Vec<SensorStream> = Vec::new();
    let mut current: Option<Pending> = None;
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(line, e.to_string()))?;
        if rec.len() != 3 + n_ch {
            return Err(csv_err(line, format!("expected {} fields, found {}", 3 + n_ch, rec.len())));
        }
        let subject = &rec[0];
        if subject.is_empty() {
            return Err(csv_err(line, "empty subject"));
        }
        let t: f64 = rec[2]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| csv_err(line, format!("time `{}` is not a finite number", &rec[2])))?;
        let label = if rec[1].is_empty() { None } else { Some(rec[1].to_string()) };
        if current.as_ref().is_some_and(|p| p.subject != subject) {
            let done = current.take().expect("checked");
            if streams.iter().any(|s| s.subject == subject) {
                return Err(csv_err(line, format!("rows of subject `{subject}` are not contiguous")));
            }
            streams.push(finish(done, &names)?);
        }
        let p = current.get_or_insert_with(|| Pending {
            subject: subject.to_string(),
            t: Vec::new(),
            labels: Vec::new(),
            channels: vec![Vec::new(); n_ch],
            first_line: line,
        });
        if let Some(&last) = p.t.last() {
            if t <= last {
                return Err(csv_err(line, format!("time {t} does not increase within subject `{subject}`")));
            }
        }
        for k in 0..n_ch {
            let field = &rec[3 + k];
            let v: f64 = field
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| csv_err(line, format!("channel ch{k} value `{field}` is not a finite number")))?;
            p.channels[k].push(v);
        }
        p.t.push(t);
        p.labels.push(label);
    }
    match current {
        None => Err(csv_err(2, "no data rows")),
        Some(p) => {
            streams.push(finish(p, &names)?);
            Ok(streams)
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<SensorStream>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    parse_csv(std::io::BufReader::new(f))
}

/// Writes streams in the same schema [`parse_csv`] reads.
pub fn write_csv<W: Write>(writer: W, streams: &[SensorStream]) -> Result<()> {
    let first = streams.first().ok_or_else(|| invalid("no streams to write"))?;
    let n_ch = first.n_channels();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["subject".to_string(), "label".into(), "t".into()];
    header.extend((0..n_ch).map(|k| format!("ch{k}")));
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for s in streams {
        s.validate()?;
        if s.n_channels() != n_ch {
            return Err(invalid("all streams must have the same channel count"));
        }
        for i in 0..s.len() {
            let mut row = Vec::with_capacity(3 + n_ch);
            row.push(s.subject.clone());
            row.push(s.labels[i].clone().unwrap_or_default());
            row.push(format!("{}", s.t[i]));
            row.extend(s.channels.iter().map(|c| format!("{}", c[i])));
            w.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, streams: &[SensorStream]) -> Result<()> {
    let f = File::create(path.as_ref())?;
    write_csv(std::io::BufWriter::new(f), streams)
}

/// Integer decimation: each output sample averages `factor` consecutive inputs.
/// The block label is its majority label (ties keep the first sample's label);
/// a trailing partial block is dropped.
pub fn decimate(s: &SensorStream, factor: usize) -> Result<SensorStream> {
    if factor == 0 {
        return Err(invalid("decimation factor must be >= 1"));
    }
    s.validate()?;
    let blocks = s.len() / factor;
    let mut out = SensorStream {
        subject: s.subject.clone(),
        sample_rate_hz: s.sample_rate_hz / factor as f64,
        channel_names: s.channel_names.clone(),
        channels: vec![Vec::with_capacity(blocks); s.n_channels()],
        labels: Vec::with_capacity(blocks),
        t: Vec::with_capacity(blocks),
    };
    for b in 0..blocks {
        let r = b * factor..(b + 1) * factor;
        for (k, c) in s.channels.iter().enumerate() {
            out.channels[k].push(c[r.clone()].iter().sum::<f64>() / factor as f64);
        }
        out.t.push(s.t[r.start]);
        let block = &s.labels[r.clone()];
        let mut best = &block[0];
        let mut best_count = 0;
        for cand in block {
            let count = block.iter().filter(|l| *l == cand).count();
            if count > best_count {
                best = cand;
                best_count = count;
            }
        }
        out.labels.push(best.clone());
    }
    Ok(out)
}
