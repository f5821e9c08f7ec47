#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use covmix::ingest::{AreaRecord, Dataset, Observation};

pub fn covmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covmix"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

/// Write the four input tables. Each area is `(id, large_area, lat, lon)`;
/// each estimate is `(id, time, rate, design_sd)`.
pub fn write_inputs(
    dir: &Path,
    areas: &[(&str, &str, f64, f64)],
    estimates: &[(&str, i64, f64, f64)],
    pairs: &[(&str, &str)],
) {
    fs::create_dir_all(dir).unwrap();
    let mut a = String::from("area_id,name,large_area_id,latitude,longitude\n");
    for (id, l, lat, lon) in areas {
        a.push_str(&format!("{id},{id},{l},{lat},{lon}\n"));
    }
    let mut e = String::from("area_id,time_index,rate_pct,design_sd_pct\n");
    for (id, t, y, sd) in estimates {
        e.push_str(&format!("{id},{t},{y},{sd}\n"));
    }
    let mut adj = String::from("area_id_a,area_id_b\n");
    for (x, y) in pairs {
        adj.push_str(&format!("{x},{y}\n"));
    }
    fs::write(dir.join("areas.csv"), a).unwrap();
    fs::write(dir.join("estimates.csv"), e).unwrap();
    fs::write(dir.join("covariates.csv"), "area_id,year\n").unwrap();
    fs::write(dir.join("adjacency.csv"), adj).unwrap();
}

/// One observation per area at a single time, no covariates.
pub fn flat_dataset(y: &[f64], v: &[f64], groups: &[usize]) -> Dataset {
    let m = y.len();
    let n_large = groups.iter().max().map_or(1, |g| g + 1);
    Dataset {
        areas: (0..m)
            .map(|i| AreaRecord {
                area_id: format!("A{i:02}"),
                name: String::new(),
                large_area_id: format!("L{}", groups[i]),
                latitude: 0.0,
                longitude: i as f64,
            })
            .collect(),
        large_areas: (0..n_large).map(|l| format!("L{l}")).collect(),
        area_large: groups.to_vec(),
        times: vec![1],
        observations: (0..m)
            .map(|i| Observation {
                area: i,
                time: 0,
                rate: y[i],
                variance: v[i],
            })
            .collect(),
        covariate_names: Vec::new(),
        x: vec![Vec::new(); m],
        adjacency: Vec::new(),
        dropped: Vec::new(),
    }
}

pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Map `work` over `0..n` on all available cores, keeping index order.
pub fn parallel_map<T: Send>(n: usize, work: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let threads = std::thread::available_parallelism()
        .map_or(2, |p| p.get())
        .max(1);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = work(i);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .unwrap()
        .into_iter()
        .map(Option::unwrap)
        .collect()
}
