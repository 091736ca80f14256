use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::Deserialize;

use super::{IngestReport, RejectReason};
use crate::{Error, Mode, Provider, Result, Trip, Waypoint, WeightClass};

/// Column order of the waypoint CSV.
pub const CSV_HEADER: [&str; 8] = [
    "trip_id",
    "device_id",
    "mode",
    "weight_class",
    "provider",
    "lat",
    "lon",
    "t_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(Error::Config(format!("unknown trip format '{other}'"))),
        }
    }
}

/// Formats a coordinate losslessly with at least six decimals.
pub fn fmt_coord(x: f64) -> String {
    let s = format!("{x}");
    let decimals = s.split_once('.').map_or(0, |(_, d)| d.len());
    if decimals >= 6 || s.contains('e') {
        s
    } else {
        format!("{x:.6}")
    }
}

struct Attrs {
    trip_id: String,
    device_id: String,
    mode: String,
    weight_class: String,
    provider: String,
}

fn assemble(attrs: Attrs, waypoints: Vec<Waypoint>) -> std::result::Result<Trip, RejectReason> {
    if waypoints.iter().any(|w| !w.pos().is_valid()) {
        return Err(RejectReason::CoordinateBounds);
    }
    if waypoints.iter().any(|w| w.t_ms <= 0) {
        return Err(RejectReason::NonPositiveTime);
    }
    if waypoints.len() < 2 {
        return Err(RejectReason::TooFewWaypoints);
    }
    if waypoints.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
        return Err(RejectReason::NonMonotonicTime);
    }
    let mode = Mode::from_str(&attrs.mode).map_err(|_| RejectReason::BadAttribute)?;
    let wc = WeightClass::from_str(&attrs.weight_class).map_err(|_| RejectReason::BadAttribute)?;
    let provider = Provider::from_str(&attrs.provider).map_err(|_| RejectReason::BadAttribute)?;
    if attrs.trip_id.is_empty() {
        return Err(RejectReason::BadAttribute);
    }
    Trip::new(attrs.trip_id, attrs.device_id, mode, wc, provider, waypoints)
        .map_err(|_| RejectReason::Malformed)
}

/// Streaming trip parser. Yields valid trips; malformed records are counted
/// in the report and skipped. Only I/O failures surface as `Err` items.
///
/// CSV rows of one trip must be contiguous; a trip ends when `trip_id`
/// changes.
pub struct TripReader<R: Read> {
    source: Source<R>,
    report: IngestReport,
}

enum Source<R: Read> {
    Csv {
        rows: csv::StringRecordsIntoIter<R>,
        pending: Option<csv::StringRecord>,
    },
    Jsonl {
        lines: std::io::Lines<BufReader<R>>,
    },
}

/// Opens a trip stream. For CSV the header is read and checked eagerly.
pub fn parse_trips<R: Read>(source: R, format: Format) -> Result<TripReader<R>> {
    let source = match format {
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .from_reader(source);
            let header = rdr.headers()?.clone();
            let names: Vec<&str> = header.iter().map(str::trim).collect();
            if names != CSV_HEADER {
                return Err(Error::Parse(format!(
                    "unexpected trip CSV header {:?}, expected {:?}",
                    names, CSV_HEADER
                )));
            }
            Source::Csv {
                rows: rdr.into_records(),
                pending: None,
            }
        }
        Format::Jsonl => Source::Jsonl {
            lines: BufReader::new(source).lines(),
        },
    };
    Ok(TripReader {
        source,
        report: IngestReport::default(),
    })
}

impl<R: Read> TripReader<R> {
    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    pub fn into_report(self) -> IngestReport {
        self.report
    }

    fn finish(&mut self, n_rows: u64, outcome: std::result::Result<Trip, RejectReason>) -> Option<Trip> {
        self.report.record_read(n_rows);
        match outcome {
            Ok(t) => {
                self.report.record_kept();
                Some(t)
            }
            Err(reason) => {
                self.report.record_rejected(reason);
                None
            }
        }
    }

    fn next_csv(&mut self) -> Option<Result<Trip>> {
        loop {
            let Source::Csv { rows, pending } = &mut self.source else {
                unreachable!()
            };
            let first = match pending.take() {
                Some(r) => r,
                None => match rows.next()? {
                    Ok(r) => r,
                    Err(e) => return Some(Err(csv_to_error(e))),
                },
            };
            let trip_id = first.get(0).unwrap_or("").to_string();
            let attrs = Attrs {
                trip_id: trip_id.clone(),
                device_id: first.get(1).unwrap_or("").to_string(),
                mode: first.get(2).unwrap_or("").to_string(),
                weight_class: first.get(3).unwrap_or("").to_string(),
                provider: first.get(4).unwrap_or("").to_string(),
            };
            let mut malformed = false;
            let mut waypoints = Vec::new();
            let mut n_rows = 0u64;
            let mut push = |rec: &csv::StringRecord, malformed: &mut bool| {
                n_rows += 1;
                match parse_row(rec) {
                    Some(w) => waypoints.push(w),
                    None => *malformed = true,
                }
            };
            push(&first, &mut malformed);
            let mut io_err = None;
            loop {
                match rows.next() {
                    None => break,
                    Some(Err(e)) => {
                        io_err = Some(csv_to_error(e));
                        break;
                    }
                    Some(Ok(rec)) => {
                        if rec.get(0).unwrap_or("") == trip_id {
                            push(&rec, &mut malformed);
                        } else {
                            *pending = Some(rec);
                            break;
                        }
                    }
                }
            }
            let outcome = if malformed {
                Err(RejectReason::Malformed)
            } else {
                assemble(attrs, waypoints)
            };
            let trip = self.finish(n_rows, outcome);
            if let Some(e) = io_err {
                return Some(Err(e));
            }
            if let Some(t) = trip {
                return Some(Ok(t));
            }
        }
    }

    fn next_jsonl(&mut self) -> Option<Result<Trip>> {
        loop {
            let Source::Jsonl { lines } = &mut self.source else {
                unreachable!()
            };
            let line = match lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            if line.trim().is_empty() {
                continue;
            }
            let (n, outcome) = match serde_json::from_str::<JsonTrip>(&line) {
                Ok(j) => {
                    let n = j.waypoints.len() as u64;
                    let wps = j
                        .waypoints
                        .iter()
                        .map(|&(lat, lon, t_ms)| Waypoint { lat, lon, t_ms })
                        .collect();
                    let attrs = Attrs {
                        trip_id: j.trip_id,
                        device_id: j.device_id,
                        mode: j.mode,
                        weight_class: j.weight_class,
                        provider: j.provider,
                    };
                    (n, assemble(attrs, wps))
                }
                Err(_) => (0, Err(RejectReason::Malformed)),
            };
            if let Some(t) = self.finish(n, outcome) {
                return Some(Ok(t));
            }
        }
    }
}

impl<R: Read> Iterator for TripReader<R> {
    type Item = Result<Trip>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.source {
            Source::Csv { .. } => self.next_csv(),
            Source::Jsonl { .. } => self.next_jsonl(),
        }
    }
}

fn csv_to_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Csv(e)
    }
}

fn parse_row(rec: &csv::StringRecord) -> Option<Waypoint> {
    if rec.len() != CSV_HEADER.len() {
        return None;
    }
    let lat = rec.get(5)?.trim().parse::<f64>().ok()?;
    let lon = rec.get(6)?.trim().parse::<f64>().ok()?;
    let t_ms = rec.get(7)?.trim().parse::<i64>().ok()?;
    Some(Waypoint { lat, lon, t_ms })
}

#[derive(Deserialize)]
struct JsonTrip {
    trip_id: String,
    device_id: String,
    mode: String,
    weight_class: String,
    provider: String,
    waypoints: Vec<(f64, f64, i64)>,
}

/// Writes trips as the waypoint CSV (header included).
pub fn write_trips_csv<'a, W, I>(out: W, trips: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Trip>,
{
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(CSV_HEADER)?;
    for t in trips {
        for p in t.waypoints() {
            w.write_record([
                t.trip_id.as_str(),
                t.device_id.as_str(),
                t.mode.as_str(),
                t.weight_class.as_str(),
                t.provider.as_str(),
                &fmt_coord(p.lat),
                &fmt_coord(p.lon),
                &p.t_ms.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one JSON trip object per line.
pub fn write_trips_jsonl<'a, W, I>(mut out: W, trips: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Trip>,
{
    for t in trips {
        let wps: Vec<String> = t
            .waypoints()
            .iter()
            .map(|p| format!("[{},{},{}]", fmt_coord(p.lat), fmt_coord(p.lon), p.t_ms))
            .collect();
        writeln!(
            out,
            "{{\"trip_id\":{},\"device_id\":{},\"mode\":\"{}\",\"weight_class\":\"{}\",\"provider\":\"{}\",\"waypoints\":[{}]}}",
            serde_json::to_string(&t.trip_id)?,
            serde_json::to_string(&t.device_id)?,
            t.mode,
            t.weight_class,
            t.provider,
            wps.join(",")
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_all(data: &str, format: Format) -> (Vec<Trip>, IngestReport) {
        let mut rdr = parse_trips(data.as_bytes(), format).unwrap();
        let trips: Vec<Trip> = rdr.by_ref().map(|t| t.unwrap()).collect();
        (trips, rdr.into_report())
    }

    const HEADER: &str = "trip_id,device_id,mode,weight_class,provider,lat,lon,t_ms\n";

    #[test]
    fn empty_file_with_header() {
        let (trips, rep) = read_all(HEADER, Format::Csv);
        assert!(trips.is_empty());
        assert_eq!(rep.trips_read, 0);
        assert_eq!(rep.trips_rejected, 0);
    }

    #[test]
    fn out_of_bounds_latitude_rejected() {
        let data = format!("{HEADER}t1,d1,vehicle,0-14,fleet,91.000000,-76.500000,1443657600000\n");
        let (trips, rep) = read_all(&data, Format::Csv);
        assert!(trips.is_empty());
        assert_eq!(rep.trips_rejected, 1);
        assert_eq!(rep.rejection_reasons["coordinate_bounds"], 1);
    }

    #[test]
    fn malformed_rows_do_not_abort() {
        let data = format!(
            "{HEADER}\
t1,d1,vehicle,0-14,fleet,39.000000,-76.500000,1443657600000\n\
t1,d1,vehicle,0-14,fleet,abc,-76.500100,1443657601000\n\
t2,d1,vehicle,0-14,fleet,39.000000,-76.500000,1443657700000\n\
t2,d1,vehicle,0-14,fleet,39.000100,-76.500000,1443657701000\n\
t3,d2,bus,0-14,fleet,39.000000,-76.500000,1443657700000\n\
t3,d2,bus,0-14,fleet,39.000100,-76.500000,1443657701000\n\
t4,d2,vehicle\n"
        );
        let (trips, rep) = read_all(&data, Format::Csv);
        assert_eq!(trips.len(), 1);
        assert_eq!(trips[0].trip_id, "t2");
        assert_eq!(rep.trips_read, 4);
        assert_eq!(rep.trips_rejected, 3);
        assert_eq!(rep.rejection_reasons["malformed"], 2);
        assert_eq!(rep.rejection_reasons["bad_attribute"], 1);
        assert_eq!(rep.waypoints_read, 7);
    }

    #[test]
    fn wrong_header_is_an_error() {
        assert!(parse_trips("a,b,c\n".as_bytes(), Format::Csv).is_err());
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn jsonl_parses_and_rejects() {
        let data = "{\"trip_id\":\"a\",\"device_id\":\"d\",\"mode\":\"vehicle\",\"weight_class\":\"26+\",\"provider\":\"consumer\",\"waypoints\":[[39.1,-76.5,1443657600000],[39.1001,-76.5,1443657601000]]}\n\
not json\n\
{\"trip_id\":\"b\",\"device_id\":\"d\",\"mode\":\"vehicle\",\"weight_class\":\"26+\",\"provider\":\"consumer\",\"waypoints\":[[39.1,-76.5,1443657600000]]}\n";
        let (trips, rep) = read_all(data, Format::Jsonl);
        assert_eq!(trips.len(), 1);
        assert_eq!(trips[0].weight_class, WeightClass::W26Plus);
        assert_eq!(rep.trips_read, 3);
        assert_eq!(rep.rejection_reasons["malformed"], 1);
        assert_eq!(rep.rejection_reasons["too_few_waypoints"], 1);
    }

    #[test]
    fn coordinates_keep_six_decimals() {
        assert_eq!(fmt_coord(38.9), "38.900000");
        assert_eq!(fmt_coord(-76.0), "-76.000000");
        assert_eq!(fmt_coord(39.123456789), "39.123456789");
        assert_eq!(fmt_coord(0.1 + 0.2).parse::<f64>().unwrap(), 0.1 + 0.2);
    }
}
