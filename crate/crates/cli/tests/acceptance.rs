//! One pass/fail line per acceptance criterion; exits non-zero on any failure.

mod common;

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Child, Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;
use xwacoda_core::cube::{build_cube, AxisSpec, Cube, CubeSpec};
use xwacoda_core::etl::{generate_parts, generate_warehouse};
use xwacoda_core::model::{parse_model, serialize_model};
use xwacoda_core::query::{evaluate, oracle_evaluate, parse_query, AggregateFunction, Cell};
use xwacoda_core::store::{
    check_integrity, load_parts, load_warehouse, parse_dimension_document, parse_fact_document,
    serialize_dimension_document, serialize_fact_document, write_documents, HierarchyMode, StoreParts, WarehouseStore,
};
use xwacoda_core::synth::{
    case_study_model, populate, random_etl_case, random_query, random_warehouse, systematic_mutations, SynthConfig,
};
use xwacoda_core::value::Number;

use common::{fixtures, mini, AGE_58_REGIONS};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

fn store_of(parts: StoreParts) -> WarehouseStore {
    WarehouseStore::from_parts(parts, HierarchyMode::Strict).expect("generated warehouse loads")
}

// ---------------------------------------------------------------------------
// 1: the MINI query through the CLI and over HTTP

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_post(port: u16, path: &str, body: &str) -> std::io::Result<(u16, Json)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port))?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    write!(
        stream,
        "POST {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut response = String::new();
    stream.read_to_string(&mut response)?;
    let status = response.split(' ').nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let body = response.split_once("\r\n\r\n").map(|(_, b)| b).unwrap_or("");
    Ok((status, serde_json::from_str(body).unwrap_or(Json::Null)))
}

fn criterion_1() -> Verdict {
    let store = load_warehouse(&mini().join("dw-model.xml")).map_err(|e| e.to_string())?;
    let query = parse_query(AGE_58_REGIONS).map_err(|e| e.to_string())?;
    let oracle = oracle_evaluate(&store, &query).map_err(|e| e.to_string())?;
    ensure(oracle.rows == vec![vec![Cell::Int(9)]], || format!("oracle gave {:?}", oracle.rows))?;

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_xwacoda"))
        .args(["query", mini().to_str().unwrap(), "--query", AGE_58_REGIONS, "--format", "delimited"])
        .output()
        .map_err(|e| e.to_string())?;
    let cli_time = within(start, Duration::from_secs(1))?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    ensure(out.status.success() && rows == ["9"], || format!("CLI printed {stdout:?}"))?;

    let port = TcpListener::bind("127.0.0.1:0").and_then(|l| l.local_addr()).map_err(|e| e.to_string())?.port();
    let _server = Server(
        Command::new(env!("CARGO_BIN_EXE_xwacoda"))
            .args(["serve", mini().to_str().unwrap(), "--bind", &format!("127.0.0.1:{port}")])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?,
    );
    let ready = Instant::now();
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        ensure(ready.elapsed() < Duration::from_secs(10), || "server did not start".into())?;
        std::thread::sleep(Duration::from_millis(20));
    }
    let start = Instant::now();
    let (status, body) = http_post(port, "/api/query", AGE_58_REGIONS).map_err(|e| e.to_string())?;
    let http_time = within(start, Duration::from_secs(1))?;
    ensure(status == 200 && body["rows"] == serde_json::json!([[9]]), || format!("HTTP {status}: {body}"))?;
    Ok(format!("CLI 9 in {cli_time:.0?}, HTTP 9 in {http_time:.0?}, oracle 9"))
}

// ---------------------------------------------------------------------------
// 2: case-study model, 1,000 facts, 20 scripted queries

const SCRIPTED: [&str; 20] = [
    "FROM Suspicious_region SELECT count(*)",
    "FROM Suspicious_region SELECT sum(Number_of_regions), sum(Region_length)",
    "FROM Suspicious_region WHERE Patient.Patient.Patient_age = 7 SELECT sum(Number_of_regions)",
    "FROM Suspicious_region GROUP BY Patient.AgeGroup SELECT count(*), avg(Region_length)",
    "FROM Suspicious_region WHERE Patient.AgeGroup.range = 's2' SELECT sum(Number_of_regions)",
    "FROM Suspicious_region GROUP BY Lesion_type.Category SELECT sum(Region_length)",
    "FROM Suspicious_region WHERE Lesion_type.Lesion_type.name = 's1' GROUP BY Digitizer.Digitizer SELECT count(*)",
    "FROM Suspicious_region WHERE Assessment.Assessment.score >= 3 SELECT min(Region_length), max(Region_length)",
    "FROM Suspicious_region GROUP BY Subtlety.Subtlety SELECT avg(Number_of_regions)",
    "FROM Suspicious_region WHERE Pathology.Pathology.name != 's0' SELECT count(Number_of_regions)",
    "FROM Suspicious_region GROUP BY Date_of_study.Year SELECT sum(Number_of_regions)",
    "FROM Suspicious_region GROUP BY Date_of_study.Month, Date_of_digitization.Year SELECT count(*)",
    "FROM Suspicious_region WHERE Date_of_study.Day.date < '2020-01-10' SELECT sum(Region_length)",
    "FROM Suspicious_region WHERE Scanner_image.Scanner_image.resolution > 2.5 GROUP BY Scanner_image.Scanner_image SELECT max(Number_of_regions)",
    "FROM Suspicious_region WHERE Boundary.Boundary.name = 's3' AND Digitizer.Digitizer.name = 's4' SELECT count(*)",
    "FROM Suspicious_region GROUP BY Patient.AgeGroup, Lesion_type.Category SELECT sum(Number_of_regions), avg(Region_length)",
    "FROM Suspicious_region WHERE Date_of_study.Year.year >= 5 GROUP BY Pathology.Pathology SELECT count(*)",
    "FROM Suspicious_region WHERE Patient.Patient.Patient_age < 6 AND Subtlety.Subtlety.value <= 3 SELECT sum(Number_of_regions)",
    "FROM Suspicious_region GROUP BY Boundary.Boundary SELECT min(Number_of_regions), max(Number_of_regions)",
    "FROM Suspicious_region WHERE Date_of_digitization.Month.month = 's5' GROUP BY Date_of_digitization.Year SELECT avg(Region_length)",
];

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let bytes = std::fs::read(fixtures().join("case_study/dw-model.xml")).map_err(|e| e.to_string())?;
    let model = parse_model(&bytes).map_err(|e| e.to_string())?;
    let class = model.fact_class("Suspicious_region").ok_or("no Suspicious_region")?;
    let measures: Vec<&str> = class.measures.iter().map(|m| m.id.as_str()).collect();
    ensure(measures == ["Region_length", "Number_of_regions"] && class.dimension_refs.len() == 10, || {
        format!("unexpected fact class {class:?}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let parts = populate(&mut rng, &model, 1000, &SynthConfig::default());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_documents(dir.path(), &parts.to_documents()).map_err(|e| e.to_string())?;
    let model_path = dir.path().join("dw-model.xml");
    let report = check_integrity(&load_parts(&model_path).map_err(|e| e.to_string())?, HierarchyMode::Strict);
    ensure(report.is_empty(), || format!("integrity report: {report:?}"))?;
    let store = load_warehouse(&model_path).map_err(|e| e.to_string())?;
    ensure(store.fact_count() == 1000, || format!("{} facts loaded", store.fact_count()))?;

    let mut nonempty = 0;
    for text in SCRIPTED {
        let q = parse_query(text).map_err(|e| format!("{text}: {e}"))?;
        let fast = evaluate(&store, &q).map_err(|e| format!("{text}: {e}"))?;
        let slow = oracle_evaluate(&store, &q).map_err(|e| format!("{text}: {e}"))?;
        if let Some(d) = fast.diff(&slow, 1e-9) {
            return Err(format!("{text}: {d}"));
        }
        nonempty += usize::from(fast.rows.iter().any(|r| r.iter().any(|c| !matches!(c, Cell::Null | Cell::Int(0)))));
    }
    let took = within(start, Duration::from_secs(30))?;
    Ok(format!("empty integrity report, 20/20 queries agree ({nonempty} non-trivial) in {took:.2?}"))
}

// ---------------------------------------------------------------------------
// 3: random warehouses and queries against the oracle

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let config = SynthConfig::default();
    let mut pairs = 0;
    for seed in 0..150u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + seed);
        let parts = random_warehouse(&mut rng, &config);
        let q = random_query(&mut rng, &parts);
        ensure(q.predicates.len() <= 3 && q.group_by.len() <= 2, || format!("query out of bounds: {q}"))?;
        let store = store_of(parts);
        let fast = evaluate(&store, &q);
        let slow = oracle_evaluate(&store, &q);
        match (fast, slow) {
            (Ok(a), Ok(b)) => {
                if let Some(d) = a.diff(&b, 1e-9) {
                    return Err(format!("seed {seed}, {q}: {d}"));
                }
            }
            (Err(a), Err(b)) if a == b => {}
            (a, b) => return Err(format!("seed {seed}, {q}: engine {a:?}, oracle {b:?}")),
        }
        pairs += 1;
    }
    let took = within(start, Duration::from_secs(120))?;
    Ok(format!("{pairs} pairs agree in {took:.2?}"))
}

// ---------------------------------------------------------------------------
// 4: cube laws

fn same_cells(a: &Cube, b: &Cube) -> bool {
    a.axes == b.axes
        && a.cells.len() == b.cells.len()
        && a.cells.iter().zip(&b.cells).all(|((ka, ca), (kb, cb))| {
            ka == kb
                && ca.count == cb.count
                && match (ca.value, cb.value) {
                    (Number::Int(x), Number::Int(y)) => x == y,
                    (x, y) => x.approx_eq(y, 1e-9),
                }
        })
}

fn conserved(a: &Cube, b: &Cube) -> bool {
    let (x, y) = (a.total(), b.total());
    (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let config = SynthConfig::default();
    let (mut cubes, mut roll_ups) = (0, 0);
    let mut seed = 0u64;
    while cubes < 50 {
        seed += 1;
        ensure(seed < 1000, || format!("only {cubes} usable cubes"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(4_000 + seed);
        let parts = random_warehouse(&mut rng, &config);
        let model = parts.model.clone();
        let class = &model.fact_classes[0];
        let mut dims: Vec<&String> = class.dimension_refs.iter().collect();
        dims.shuffle(&mut rng);
        let axes: Vec<AxisSpec> = dims
            .into_iter()
            .take(rng.gen_range(1..=2))
            .map(|d| AxisSpec {
                dimension: d.clone(),
                level: model.dimension(d).unwrap().base_level().id.clone(),
            })
            .collect();
        if axes.iter().all(|a| model.dimension(&a.dimension).unwrap().levels.len() < 2) {
            continue;
        }
        let aggregate = *[AggregateFunction::Sum, AggregateFunction::Count].choose(&mut rng).unwrap();
        let measure = match aggregate {
            AggregateFunction::Count if rng.gen_bool(0.5) => None,
            _ => Some(class.measures.choose(&mut rng).unwrap().id.clone()),
        };
        let spec = CubeSpec {
            fact_class: class.id.clone(),
            axes,
            measure,
            aggregate,
            predicates: vec![],
            filters: vec![],
        };
        let store = store_of(parts);
        let base = build_cube(&store, &spec).map_err(|e| format!("seed {seed}: {e}"))?;
        for axis in &spec.axes {
            let levels = model.dimension(&axis.dimension).unwrap().levels.len();
            let mut cube = base.clone();
            for _ in 1..levels {
                let up = cube.roll_up(&axis.dimension, &store).map_err(|e| format!("seed {seed}: {e}"))?;
                let direct = build_cube(&store, &up.spec()).map_err(|e| format!("seed {seed}: {e}"))?;
                ensure(same_cells(&up, &direct), || format!("seed {seed}: roll_up {} differs from a direct build", axis.dimension))?;
                ensure(conserved(&up, &cube), || format!("seed {seed}: total changed under roll_up {}", axis.dimension))?;
                let down = up.drill_down(&axis.dimension, &store).map_err(|e| format!("seed {seed}: {e}"))?;
                ensure(same_cells(&down, &cube), || format!("seed {seed}: drill_down(roll_up) is not the identity on {}", axis.dimension))?;
                ensure(conserved(&down, &up), || format!("seed {seed}: total changed under drill_down"))?;
                roll_ups += 1;
                cube = up;
            }
        }
        cubes += 1;
    }
    let took = within(start, Duration::from_secs(60))?;
    Ok(format!("{cubes} cubes, {roll_ups} roll-ups satisfy conservation, consistency and round trip in {took:.2?}"))
}

// ---------------------------------------------------------------------------
// 5: systematic mutations

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = SynthConfig {
        max_base_members: 12,
        ..SynthConfig::default()
    };
    let parts = populate(&mut rng, &case_study_model(), 200, &config);
    let clean = check_integrity(&parts, HierarchyMode::Strict);
    ensure(clean.is_empty(), || format!("unmutated warehouse reports {clean:?}"))?;
    let mutations = systematic_mutations(&parts, 10);
    let kinds: BTreeSet<_> = mutations.iter().map(|m| m.expected.as_str()).collect();
    ensure(mutations.len() == 50 && kinds.len() == 5, || format!("{} mutations over {kinds:?}", mutations.len()))?;
    for m in &mutations {
        let report = check_integrity(&m.parts, HierarchyMode::Strict);
        ensure(report.iter().any(|d| d.code == m.expected), || {
            format!("{}: expected {}, got {report:?}", m.description, m.expected)
        })?;
    }
    Ok(format!("50 mutations over {} kinds, each reported with its code", kinds.len()))
}

// ---------------------------------------------------------------------------
// 6: parse/serialize fixpoints

fn criterion_6() -> Verdict {
    for path in [fixtures().join("case_study/dw-model.xml"), mini().join("dw-model.xml")] {
        let first = parse_model(&std::fs::read(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let bytes = serialize_model(&first);
        let second = parse_model(&bytes).map_err(|e| e.to_string())?;
        ensure(second == first && serialize_model(&second) == bytes, || format!("{} is not a fixpoint", path.display()))?;
    }
    let (mut fact_docs, mut dim_docs) = (0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(6_000 + seed);
        let parts = random_warehouse(&mut rng, &SynthConfig::default());
        for class in &parts.model.fact_classes {
            let bytes = serialize_fact_document(class, &parts.facts[&class.id]);
            let first = parse_fact_document(&bytes, class).map_err(|e| e.to_string())?;
            let again = serialize_fact_document(class, &first);
            let second = parse_fact_document(&again, class).map_err(|e| e.to_string())?;
            ensure(first == second && first == parts.facts[&class.id] && again == bytes, || format!("seed {seed}: fact document of {}", class.id))?;
            fact_docs += 1;
        }
        for dim in &parts.model.dimensions {
            let bytes = serialize_dimension_document(dim, &parts.members[&dim.id]);
            let first = parse_dimension_document(&bytes, dim).map_err(|e| e.to_string())?;
            let again = serialize_dimension_document(dim, &first);
            let second = parse_dimension_document(&again, dim).map_err(|e| e.to_string())?;
            ensure(first == second && first == parts.members[&dim.id] && again == bytes, || format!("seed {seed}: dimension document {}", dim.id))?;
            dim_docs += 1;
        }
    }
    Ok(format!("2 model documents, {fact_docs} fact and {dim_docs} dimension documents are fixpoints"))
}

// ---------------------------------------------------------------------------
// 7: ETL closure, deduplication and determinism

fn criterion_7() -> Verdict {
    let config = SynthConfig::default();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7_000 + seed);
        let (records, mapping, model) = random_etl_case(&mut rng, &config);
        let parts = generate_parts(&records, &mapping, &model).map_err(|e| format!("seed {seed}: {e}"))?;
        let report = check_integrity(&parts, HierarchyMode::Strict);
        ensure(report.is_empty(), || format!("seed {seed}: {report:?}"))?;
        for dim in &model.dimensions {
            let m = &mapping.dimensions[&dim.id];
            let base = &dim.levels[0];
            let identity: Vec<&str> = if m.identity.is_empty() {
                base.attributes.iter().map(|a| a.id.as_str()).filter(|a| m.levels[&base.id].contains_key(*a)).collect()
            } else {
                m.identity.iter().map(String::as_str).collect()
            };
            let columns: Vec<usize> = identity
                .iter()
                .map(|a| records.field_index(m.levels[&base.id][*a].field()).expect("mapped field"))
                .collect();
            let distinct: BTreeSet<Vec<&str>> = records
                .rows
                .iter()
                .map(|r| columns.iter().map(|&c| r[c].trim()).collect())
                .collect();
            let emitted = parts.members[&dim.id].iter().filter(|x| x.level == base.id).count();
            ensure(emitted == distinct.len(), || {
                format!("seed {seed}: {} base members of {} for {} identity tuples", emitted, dim.id, distinct.len())
            })?;
        }
        let a = generate_warehouse(&records, &mapping, &model).map_err(|e| e.to_string())?;
        let b = generate_warehouse(&records, &mapping, &model).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("seed {seed}: runs differ"))?;
    }
    Ok("20 triples: empty reports, deduplicated, byte-identical reruns".into())
}

// ---------------------------------------------------------------------------
// 8: 10^5 facts over ten dimensions

fn child_max_rss_bytes() -> u64 {
    // SAFETY: getrusage only writes into the zeroed struct passed to it.
    let usage = unsafe {
        let mut usage: libc::rusage = std::mem::zeroed();
        libc::getrusage(libc::RUSAGE_CHILDREN, &mut usage);
        usage
    };
    usage.ru_maxrss as u64 * 1024
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let parts = populate(&mut rng, &case_study_model(), 100_000, &SynthConfig::default());
    let probe = parts.members["Patient"].iter().find(|m| m.level == "Patient" && m.attributes.contains_key("Patient_id")).ok_or("no patient id")?;
    let id = probe.attributes["Patient_id"].to_string();
    let query = format!(
        "FROM Suspicious_region WHERE Patient.Patient.Patient_id = '{id}' AND Digitizer.Digitizer.name = 's1' AND Assessment.Assessment.score = 3 SELECT count(*), sum(Number_of_regions)"
    );
    let expected = evaluate(&store_of(parts.clone()), &parse_query(&query).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_documents(dir.path(), &parts.to_documents()).map_err(|e| e.to_string())?;
    drop(parts);
    let size: u64 = std::fs::read_dir(dir.path()).map_err(|e| e.to_string())?.filter_map(|e| e.ok()?.metadata().ok()).map(|m| m.len()).sum();

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_xwacoda"))
        .args(["query", dir.path().to_str().unwrap(), "--query", &query, "--format", "delimited"])
        .output()
        .map_err(|e| e.to_string())?;
    let took = within(start, Duration::from_secs(10))?;
    let rss = child_max_rss_bytes();
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let printed = String::from_utf8_lossy(&out.stdout).into_owned();
    let row: Vec<String> = expected.rows[0].iter().map(ToString::to_string).collect();
    ensure(printed.lines().nth(1) == Some(row.join(",").as_str()), || format!("printed {printed:?}, expected {row:?}"))?;
    ensure(rss < 1 << 30, || format!("peak RSS {} MiB", rss >> 20))?;
    Ok(format!(
        "load + query of {} MiB in {took:.2?}, peak RSS {} MiB, answer {}",
        size >> 20,
        rss >> 20,
        row.join(",")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("MINI query returns 9 via CLI and HTTP", criterion_1),
        ("case-study warehouse answers scripted queries", criterion_2),
        ("random queries match the oracle", criterion_3),
        ("cube roll-up and drill-down laws", criterion_4),
        ("integrity mutations yield their codes", criterion_5),
        ("document round trips are fixpoints", criterion_6),
        ("ETL closure, dedup and determinism", criterion_7),
        ("10^5 facts x 10 dimensions under 10 s and 1 GB", criterion_8),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match verdict {
            Ok(detail) => println!("[PASS] {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {}. {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
