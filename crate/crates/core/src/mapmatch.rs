//! Hidden-Markov-model map matching with Viterbi decoding.
//!
//! States are candidate link projections within `candidate_radius` of each
//! waypoint. Emission and transition scores are log-domain:
//! `-d^2 / (2 sigma^2)` and `-|route - great_circle| / beta`.
//! A waypoint without candidates, or a step with no feasible transition,
//! splits the trace; the pieces are matched independently and joined with
//! a gap marker.

use std::io::{Read, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::{dedupe_route_nodes, LinkEntry, LinkId, LinkProjection, RoadNetwork, Router};
use crate::{haversine, Error, Result, Trip};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmParams {
    pub sigma_gps: f64,
    pub beta: f64,
    pub candidate_radius: f64,
    pub max_candidates: usize,
    /// Routes longer than the great-circle hop plus this are not searched.
    pub route_slack_m: f64,
}

impl Default for HmmParams {
    fn default() -> Self {
        HmmParams {
            sigma_gps: 4.07,
            beta: 20.0,
            candidate_radius: 200.0,
            max_candidates: 8,
            route_slack_m: 1000.0,
        }
    }
}

impl HmmParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.sigma_gps) && pos(self.beta) && pos(self.candidate_radius) && pos(self.route_slack_m)) {
            return Err(Error::Config("HMM parameters must be positive and finite".into()));
        }
        if self.max_candidates == 0 {
            return Err(Error::Config("max_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn emission_log_prob(distance_m: f64, sigma: f64) -> f64 {
    -(distance_m * distance_m) / (2.0 * sigma * sigma)
}

pub fn transition_log_prob(route_m: f64, great_circle_m: f64, beta: f64) -> f64 {
    -(route_m - great_circle_m).abs() / beta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RouteItem {
    Link(LinkEntry),
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedTrip {
    pub trip_id: String,
    pub route: Vec<RouteItem>,
    /// Chosen projection per waypoint; `None` where the trace was broken.
    pub projections: Vec<Option<LinkProjection>>,
    /// Joint log-likelihood of the chosen states (sum of the two parts).
    pub log_likelihood: f64,
    pub emission_sum: f64,
    pub transition_sum: f64,
    pub n_segments: usize,
}

impl MatchedTrip {
    pub fn links(&self) -> impl Iterator<Item = &LinkEntry> {
        self.route.iter().filter_map(|r| match r {
            RouteItem::Link(e) => Some(e),
            RouteItem::Gap => None,
        })
    }

    pub fn link_ids(&self) -> Vec<LinkId> {
        self.links().map(|e| e.link).collect()
    }

    /// Sum of squared projection distances over matched waypoints.
    pub fn squared_distance_sum(&self) -> f64 {
        self.projections.iter().flatten().map(|p| p.distance_m * p.distance_m).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MatchOutcome {
    Matched(MatchedTrip),
    Unmatchable { trip_id: String },
}

impl MatchOutcome {
    pub fn trip_id(&self) -> &str {
        match self {
            MatchOutcome::Matched(m) => &m.trip_id,
            MatchOutcome::Unmatchable { trip_id } => trip_id,
        }
    }

    pub fn matched(&self) -> Option<&MatchedTrip> {
        match self {
            MatchOutcome::Matched(m) => Some(m),
            MatchOutcome::Unmatchable { .. } => None,
        }
    }
}

/// Candidate states per waypoint.
pub fn candidates(trip: &Trip, net: &RoadNetwork, p: &HmmParams) -> Vec<Vec<LinkProjection>> {
    trip.waypoints()
        .iter()
        .map(|w| net.nearest_links(w.pos(), p.candidate_radius, p.max_candidates))
        .collect()
}

/// Matches one trip. Uses a fresh router; prefer [`Matcher`] for many trips.
pub fn match_trip(trip: &Trip, net: &RoadNetwork, p: &HmmParams) -> Result<MatchOutcome> {
    Matcher::new(net, *p)?.match_trip(trip)
}

/// A matcher bound to one network with reusable routing scratch space.
pub struct Matcher<'n> {
    net: &'n RoadNetwork,
    params: HmmParams,
    router: Router<'n>,
}

impl<'n> Matcher<'n> {
    pub fn new(net: &'n RoadNetwork, params: HmmParams) -> Result<Self> {
        params.validate()?;
        Ok(Matcher {
            net,
            params,
            router: Router::new(net),
        })
    }

    pub fn params(&self) -> &HmmParams {
        &self.params
    }

    pub fn match_trip(&mut self, trip: &Trip) -> Result<MatchOutcome> {
        let p = self.params;
        let wps = trip.waypoints();
        let cands = candidates(trip, self.net, &p);
        if cands.iter().all(|c| c.is_empty()) {
            return Ok(MatchOutcome::Unmatchable {
                trip_id: trip.trip_id.clone(),
            });
        }

        let mut projections: Vec<Option<LinkProjection>> = vec![None; wps.len()];
        let mut route: Vec<RouteItem> = Vec::new();
        let mut emission_sum = 0.0;
        let mut transition_sum = 0.0;
        let mut n_segments = 0usize;

        // Viterbi state for the open segment.
        let mut seg_start = 0usize;
        let mut score: Vec<f64> = Vec::new();
        let mut back: Vec<Vec<usize>> = Vec::new();
        let mut trans_cache: Vec<Vec<Vec<f64>>> = Vec::new();

        let mut i = 0usize;
        while i <= wps.len() {
            let here = cands.get(i).filter(|c| !c.is_empty());
            let mut next_score: Option<(Vec<f64>, Vec<usize>, Vec<Vec<f64>>)> = None;
            if let Some(c) = here {
                if score.is_empty() {
                    seg_start = i;
                    score = c.iter().map(|x| emission_log_prob(x.distance_m, p.sigma_gps)).collect();
                    back.clear();
                    trans_cache.clear();
                    i += 1;
                    continue;
                }
                let prev = &cands[i - 1];
                let gc = haversine(wps[i - 1].pos(), wps[i].pos());
                let max_dist = gc + p.route_slack_m;
                let mut trans = Vec::with_capacity(prev.len());
                for a in prev {
                    let d = self.router.distances(a, c, max_dist);
                    trans.push(
                        d.into_iter()
                            .map(|r| r.map_or(f64::NEG_INFINITY, |r| transition_log_prob(r, gc, p.beta)))
                            .collect::<Vec<_>>(),
                    );
                }
                let mut s = vec![f64::NEG_INFINITY; c.len()];
                let mut b = vec![0usize; c.len()];
                for (k, ck) in c.iter().enumerate() {
                    let em = emission_log_prob(ck.distance_m, p.sigma_gps);
                    for j in 0..prev.len() {
                        let v = score[j] + trans[j][k] + em;
                        if v > s[k] {
                            s[k] = v;
                            b[k] = j;
                        }
                    }
                }
                if s.iter().any(|v| v.is_finite()) {
                    next_score = Some((s, b, trans));
                }
            }
            match next_score {
                Some((s, b, trans)) => {
                    score = s;
                    back.push(b);
                    trans_cache.push(trans);
                    i += 1;
                }
                None => {
                    // close the open segment, if any
                    if !score.is_empty() {
                        let (e, t) = self.emit_segment(
                            trip,
                            &cands,
                            seg_start,
                            &score,
                            &back,
                            &trans_cache,
                            &mut projections,
                            &mut route,
                        );
                        emission_sum += e;
                        transition_sum += t;
                        n_segments += 1;
                        score.clear();
                        // a waypoint with candidates but no feasible
                        // transition starts the next segment
                        if here.is_some() {
                            continue;
                        }
                    }
                    i += 1;
                }
            }
        }

        Ok(MatchOutcome::Matched(MatchedTrip {
            trip_id: trip.trip_id.clone(),
            route,
            projections,
            log_likelihood: emission_sum + transition_sum,
            emission_sum,
            transition_sum,
            n_segments,
        }))
    }

    /// Backtracks one segment and appends its links; returns the emission
    /// and transition sums of the chosen states.
    #[allow(clippy::too_many_arguments)]
    fn emit_segment(
        &mut self,
        trip: &Trip,
        cands: &[Vec<LinkProjection>],
        start: usize,
        score: &[f64],
        back: &[Vec<usize>],
        trans: &[Vec<Vec<f64>>],
        projections: &mut [Option<LinkProjection>],
        route: &mut Vec<RouteItem>,
    ) -> (f64, f64) {
        let p = self.params;
        let wps = trip.waypoints();
        let mut best = 0usize;
        for (k, v) in score.iter().enumerate() {
            if *v > score[best] {
                best = k;
            }
        }
        let n = back.len() + 1;
        let mut states = vec![0usize; n];
        states[n - 1] = best;
        for s in (1..n).rev() {
            states[s - 1] = back[s - 1][states[s]];
        }
        let mut em = 0.0;
        let mut tr = 0.0;
        for s in 0..n {
            let c = &cands[start + s][states[s]];
            em += emission_log_prob(c.distance_m, p.sigma_gps);
            if s > 0 {
                tr += trans[s - 1][states[s - 1]][states[s]];
            }
            projections[start + s] = Some(*c);
        }

        if !route.is_empty() {
            route.push(RouteItem::Gap);
        }
        let first = cands[start][states[0]];
        let mut entries = vec![LinkEntry {
            link: first.link,
            t_entry_ms: wps[start].t_ms,
        }];
        for s in 1..n {
            let a = cands[start + s - 1][states[s - 1]];
            let b = cands[start + s][states[s]];
            let (ta, tb) = (wps[start + s - 1].t_ms, wps[start + s].t_ms);
            let gc = haversine(wps[start + s - 1].pos(), wps[start + s].pos());
            let Some(r) = self.router.route(&a, &b, gc + p.route_slack_m) else {
                continue;
            };
            if r.links.len() < 2 {
                continue;
            }
            let offsets = self.entry_offsets(&a, &b, &r.links, r.distance_m);
            for (link, s_m) in r.links[1..].iter().zip(offsets) {
                let frac = if r.distance_m > 0.0 { (s_m / r.distance_m).clamp(0.0, 1.0) } else { 1.0 };
                let t = ta + ((tb - ta) as f64 * frac).round() as i64;
                entries.push(LinkEntry {
                    link: *link,
                    t_entry_ms: t.max(entries.last().map_or(ta, |e| e.t_entry_ms)),
                });
            }
        }
        route.extend(dedupe_route_nodes(&entries).into_iter().map(RouteItem::Link));
        (em, tr)
    }

    /// Route distance from `a` to the entry of each of `links[1..]`.
    fn entry_offsets(&self, a: &LinkProjection, b: &LinkProjection, links: &[LinkId], total: f64) -> Vec<f64> {
        let len = |id: &LinkId| self.net.link(*id).map_or(0.0, |l| l.length_m());
        let middle: Vec<f64> = links[1..links.len() - 1].iter().map(len).collect();
        let m: f64 = middle.iter().sum();
        let la = len(&a.link);
        let lb = len(&b.link);
        // pick the travel direction on the end links that explains the total
        let mut head = la - a.offset_m;
        let mut best = f64::INFINITY;
        for ha in [la - a.offset_m, a.offset_m] {
            for tb in [b.offset_m, lb - b.offset_m] {
                let err = (ha + m + tb - total).abs();
                if err < best {
                    best = err;
                    head = ha;
                }
            }
        }
        let mut out = Vec::with_capacity(links.len() - 1);
        let mut s = head;
        out.push(s);
        for l in &middle {
            s += l;
            out.push(s);
        }
        out.truncate(links.len() - 1);
        out
    }
}

/// Batch counters. `elapsed` is wall-clock and is not serialized so that
/// reports stay reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub trips: usize,
    pub matched: usize,
    pub unmatchable: usize,
    pub gaps: usize,
    pub links_emitted: usize,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl BatchReport {
    pub fn trips_per_second(&self) -> f64 {
        let s = self.elapsed.as_secs_f64();
        if s > 0.0 {
            self.trips as f64 / s
        } else {
            0.0
        }
    }
}

/// Matches trips on a pool of `workers` threads. Outcomes are sorted by
/// trip id (input order breaks ties), independent of the worker count.
pub fn match_batch(
    trips: &[Trip],
    net: &RoadNetwork,
    params: &HmmParams,
    workers: usize,
) -> Result<(Vec<MatchOutcome>, BatchReport)> {
    params.validate()?;
    let workers = workers.max(1);
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let mut outcomes: Vec<(usize, MatchOutcome)> = pool.install(|| {
        trips
            .par_iter()
            .enumerate()
            .map_init(
                || Matcher::new(net, *params).expect("validated"),
                |m, (i, t)| m.match_trip(t).map(|o| (i, o)),
            )
            .collect::<Result<Vec<_>>>()
    })?;
    outcomes.sort_by(|a, b| a.1.trip_id().cmp(b.1.trip_id()).then(a.0.cmp(&b.0)));
    let outcomes: Vec<MatchOutcome> = outcomes.into_iter().map(|(_, o)| o).collect();

    let mut report = BatchReport {
        trips: trips.len(),
        workers,
        ..Default::default()
    };
    for o in &outcomes {
        match o {
            MatchOutcome::Matched(m) => {
                report.matched += 1;
                report.gaps += m.route.iter().filter(|r| matches!(r, RouteItem::Gap)).count();
                report.links_emitted += m.links().count();
            }
            MatchOutcome::Unmatchable { .. } => report.unmatchable += 1,
        }
    }
    report.elapsed = started.elapsed();
    Ok((outcomes, report))
}

/// CSV `trip_id,seq,link_id,t_entry_ms`. A gap is a row with empty
/// `link_id` and `t_entry_ms`; unmatchable trips produce no rows.
pub fn write_matched_csv<W: Write>(out: W, outcomes: &[MatchOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trip_id", "seq", "link_id", "t_entry_ms"])?;
    for m in outcomes.iter().filter_map(|o| o.matched()) {
        for (seq, item) in m.route.iter().enumerate() {
            match item {
                RouteItem::Link(e) => w.write_record([
                    m.trip_id.as_str(),
                    &seq.to_string(),
                    &e.link.to_string(),
                    &e.t_entry_ms.to_string(),
                ])?,
                RouteItem::Gap => w.write_record([m.trip_id.as_str(), &seq.to_string(), "", ""])?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads what [`write_matched_csv`] wrote. Only the route survives the
/// round trip; projections are empty and the likelihood terms zero.
pub fn read_matched_csv<R: Read>(src: R) -> Result<Vec<MatchedTrip>> {
    let mut r = csv::Reader::from_reader(src);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["trip_id", "seq", "link_id", "t_entry_ms"] {
        return Err(Error::Parse(format!("unexpected matched-route header {headers:?}")));
    }
    let mut out: Vec<MatchedTrip> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let trip_id = &rec[0];
        let item = match (&rec[2], &rec[3]) {
            ("", "") => RouteItem::Gap,
            (l, t) => RouteItem::Link(LinkEntry {
                link: LinkId(l.parse().map_err(|_| Error::Parse(format!("line {line}: bad link_id {l:?}")))?),
                t_entry_ms: t.parse().map_err(|_| Error::Parse(format!("line {line}: bad t_entry_ms {t:?}")))?,
            }),
        };
        match out.last_mut() {
            Some(m) if m.trip_id == trip_id => m.route.push(item),
            _ => out.push(MatchedTrip {
                trip_id: trip_id.to_string(),
                route: vec![item],
                projections: Vec::new(),
                log_likelihood: 0.0,
                emission_sum: 0.0,
                transition_sum: 0.0,
                n_segments: 0,
            }),
        }
    }
    for m in &mut out {
        m.n_segments = 1 + m.route.iter().filter(|r| matches!(r, RouteItem::Gap)).count();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::destination;
    use crate::network::{LinkSpec, NodeId};
    use crate::{Point, Waypoint};

    fn straight_net() -> (RoadNetwork, Point, Point) {
        let a = Point { lat: 39.0, lon: -76.6 };
        let b = destination(a, 90.0, 1000.0);
        let net = RoadNetwork::new(
            vec![(NodeId(1), a), (NodeId(2), b)],
            vec![LinkSpec {
                id: LinkId(7),
                from: NodeId(1),
                to: NodeId(2),
                geometry: vec![a, b],
                oneway: false,
            }],
        )
        .unwrap();
        (net, a, b)
    }

    fn trip_along(a: Point, n: usize, step: f64, bearing: f64, offset: f64) -> Trip {
        let wps = (0..n)
            .map(|i| {
                let p = destination(a, bearing, 50.0 + step * i as f64);
                let p = destination(p, bearing + 90.0, offset);
                Waypoint::new(p.lat, p.lon, 1_000_000 + 1000 * i as i64).unwrap()
            })
            .collect();
        Trip::vehicle("t", wps).unwrap()
    }

    #[test]
    fn points_on_single_link_match_it() {
        let (net, a, _) = straight_net();
        let t = trip_along(a, 10, 20.0, 90.0, 0.0);
        let m = match match_trip(&t, &net, &HmmParams::default()).unwrap() {
            MatchOutcome::Matched(m) => m,
            _ => panic!(),
        };
        assert_eq!(m.link_ids(), vec![LinkId(7)]);
        assert!(m.log_likelihood > -1e-3, "{}", m.log_likelihood);
        assert_eq!(m.n_segments, 1);
    }

    #[test]
    fn far_trace_is_unmatchable() {
        let (net, a, _) = straight_net();
        let t = trip_along(a, 5, 20.0, 90.0, 5000.0);
        assert!(matches!(
            match_trip(&t, &net, &HmmParams::default()).unwrap(),
            MatchOutcome::Unmatchable { .. }
        ));
    }

    #[test]
    fn gap_in_candidates_breaks_and_rejoins() {
        let (net, a, _) = straight_net();
        let mut wps = trip_along(a, 9, 20.0, 90.0, 0.0).waypoints().to_vec();
        let far = destination(wps[4].pos(), 0.0, 3000.0);
        wps[4] = Waypoint::new(far.lat, far.lon, wps[4].t_ms).unwrap();
        let t = Trip::vehicle("g", wps).unwrap();
        let m = match_trip(&t, &net, &HmmParams::default()).unwrap();
        let m = m.matched().unwrap();
        assert_eq!(m.n_segments, 2);
        assert!(m.projections[4].is_none());
        assert_eq!(m.route.iter().filter(|r| **r == RouteItem::Gap).count(), 1);
        let mut out = Vec::new();
        write_matched_csv(&mut out, &[MatchOutcome::Matched(m.clone())]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "trip_id,seq,link_id,t_entry_ms\ng,0,7,1000000\ng,1,,\ng,2,7,1005000\n");
        let back = read_matched_csv(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].route, m.route);
        assert_eq!(back[0].n_segments, 2);
    }

    #[test]
    fn empty_batch() {
        let (net, _, _) = straight_net();
        let (out, rep) = match_batch(&[], &net, &HmmParams::default(), 4).unwrap();
        assert!(out.is_empty());
        assert_eq!((rep.trips, rep.matched, rep.unmatchable), (0, 0, 0));
    }

    #[test]
    fn params_validate() {
        assert!(HmmParams { sigma_gps: 0.0, ..Default::default() }.validate().is_err());
        assert!(HmmParams { max_candidates: 0, ..Default::default() }.validate().is_err());
        assert!(HmmParams::default().validate().is_ok());
    }
}
