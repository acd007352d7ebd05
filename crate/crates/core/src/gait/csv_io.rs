use std::io::{Read, Write};

use super::{Sample, SensorStream};
use crate::error::{Error, Result};

const HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Data(format!("csv line {line}: {e}"))
}

/// Writes `t,ax,ay,az,gx,gy,gz` plus a `user` column when the stream has a
/// user id. Numbers use the shortest text that reads back to the same
/// `f64`.
pub fn write_csv<W: Write>(streams: &[SensorStream], out: W) -> Result<()> {
    let with_user = streams.iter().any(|s| s.user_id.is_some());
    if with_user && streams.iter().any(|s| s.user_id.is_none()) {
        return Err(Error::Usage("either every stream or no stream must carry a user id".into()));
    }
    if !with_user && streams.len() > 1 {
        return Err(Error::Usage("several streams in one file need user ids".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = HEADER.to_vec();
    if with_user {
        header.push("user");
    }
    w.write_record(&header).map_err(csv_error)?;
    for s in streams {
        for sample in &s.samples {
            let mut row: Vec<String> = Vec::with_capacity(8);
            row.push(sample.t.to_string());
            row.extend(sample.values.iter().map(|v| v.to_string()));
            if let Some(u) = s.user_id {
                row.push(u.to_string());
            }
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::Data(format!("csv write: {e}")))?;
    Ok(())
}

/// Reads one stream per user (in order of first appearance), or a single
/// stream without user id when the `user` column is absent.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SensorStream>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_owned).collect();
    let with_user = match header.len() {
        7 => false,
        8 if header[7] == "user" => true,
        _ => false,
    };
    if header[..header.len().min(7)] != HEADER || (header.len() != 7 && !with_user) {
        return Err(Error::Data(format!(
            "csv header must be t,ax,ay,az,gx,gy,gz[,user], found {}",
            header.join(",")
        )));
    }
    let mut groups: Vec<(Option<u32>, Vec<Sample>)> = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = row + 2;
        let num = |i: usize| -> Result<f64> {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| Error::Data(format!("csv line {line}: bad number {:?} in column {}", &record[i], HEADER[i])))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("csv line {line}: non-finite value in column {}", HEADER[i])));
            }
            Ok(v)
        };
        let mut values = [0.0; 6];
        for (c, v) in values.iter_mut().enumerate() {
            *v = num(c + 1)?;
        }
        let sample = Sample { t: num(0)?, values };
        let user = if with_user {
            Some(record[7].parse::<u32>().map_err(|_| Error::Data(format!("csv line {line}: bad user id {:?}", &record[7])))?)
        } else {
            None
        };
        match groups.iter_mut().find(|(u, _)| *u == user) {
            Some((_, samples)) => samples.push(sample),
            None => groups.push((user, vec![sample])),
        }
    }
    if groups.is_empty() {
        return Err(Error::Data("csv has no samples".into()));
    }
    groups
        .into_iter()
        .map(|(user, samples)| {
            SensorStream::from_samples(samples, user).map_err(|e| match (user, e) {
                (Some(u), Error::Data(m)) => Error::Data(format!("user {u}: {m}")),
                (_, e) => e,
            })
        })
        .collect()
}
