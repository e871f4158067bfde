use std::fs;
use std::path::Path;

use maplur::error::{Error, EXIT_DATA};
use maplur::io::{self, check_csv_schema, ColumnType};
use maplur::manifest::{self, Metadata};
use maplur::synth::{self, Channels, Split, SynthConfig};
use maplur_core::scene::TileImage;

fn small(channels: Channels) -> SynthConfig {
    SynthConfig { n_train: 12, n_test: 6, tile_px: 16, channels, ..SynthConfig::default() }
}

fn quantized(t: &TileImage) -> TileImage {
    TileImage::from_interleaved_u8(t.height(), t.width(), t.semantics(), &t.to_interleaved_u8()).unwrap()
}

fn written(dir: &Path, cfg: &SynthConfig, seed: u64) -> synth::Dataset {
    let scene = synth::city(cfg, seed).unwrap();
    let ds = synth::synthesize(cfg, &scene, seed).unwrap();
    manifest::write(dir, &Metadata::new(cfg, seed), &scene, &ds).unwrap();
    ds
}

#[test]
fn dataset_round_trips() {
    for channels in [Channels::Map, Channels::MapSatellite] {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(channels);
        let ds = written(tmp.path(), &cfg, 4);
        let m = manifest::read(tmp.path()).unwrap();
        assert_eq!(m.dataset.samples, ds.samples);
        assert_eq!(m.metadata, Metadata::new(&cfg, 4));
        assert_eq!(m.dataset.indices(Split::Train).len(), 12);
        for (a, b) in m.dataset.images.iter().zip(&ds.images) {
            assert_eq!(a.channels(), channels.count());
            assert_eq!(*a, quantized(b));
        }
        assert_eq!(m.scene().unwrap(), synth::city(&cfg, 4).unwrap());
        assert_eq!(manifest::split_ids(&m, Split::Test).len(), 6);
    }
}

#[test]
fn same_seed_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    written(a.path(), &small(Channels::Map), 9);
    written(b.path(), &small(Channels::Map), 9);
    for f in [manifest::SAMPLES_CSV, manifest::METADATA_JSON, manifest::SCENE_JSON] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let m = manifest::read(a.path()).unwrap();
    for s in &m.dataset.samples {
        let p = |d: &Path| fs::read(manifest::image_path(d, &s.id)).unwrap();
        assert_eq!(p(a.path()), p(b.path()));
    }
}

fn expect_data_error(dir: &Path) {
    let err = manifest::read(dir).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_DATA, "{err}");
}

fn rewrite_samples(dir: &Path, f: impl Fn(String) -> String) {
    let p = dir.join(manifest::SAMPLES_CSV);
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, f(text)).unwrap();
}

#[test]
fn malformed_datasets_are_data_errors() {
    let make = || {
        let tmp = tempfile::tempdir().unwrap();
        written(tmp.path(), &small(Channels::Map), 2);
        tmp
    };

    let t = make();
    rewrite_samples(t.path(), |s| s.replacen("target_ugm3", "target", 1));
    expect_data_error(t.path());

    let t = make();
    rewrite_samples(t.path(), |s| {
        let mut lines: Vec<&str> = s.lines().collect();
        lines[2] = lines[1];
        lines.join("\n") + "\n"
    });
    expect_data_error(t.path());

    let t = make();
    rewrite_samples(t.path(), |s| {
        let mut lines: Vec<String> = s.lines().map(String::from).collect();
        let mut cols: Vec<String> = lines[1].split(',').map(String::from).collect();
        cols[3] = "-1.0".into();
        lines[1] = cols.join(",");
        lines.join("\n") + "\n"
    });
    expect_data_error(t.path());

    let t = make();
    let id = manifest::read(t.path()).unwrap().dataset.samples[0].id.clone();
    fs::remove_file(manifest::image_path(t.path(), &id)).unwrap();
    expect_data_error(t.path());

    let t = make();
    fs::remove_file(t.path().join(manifest::METADATA_JSON)).unwrap();
    assert!(matches!(manifest::read(t.path()), Err(Error::Io { .. })));
}

#[test]
fn schema_check_reports_types_and_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("t.csv");
    let schema = [("id", ColumnType::Text), ("n", ColumnType::Integer), ("v", ColumnType::Real)];
    fs::write(&p, "id,n,v\na,1,2.5\nb,2,-3e4\n").unwrap();
    assert_eq!(check_csv_schema(&p, &schema).unwrap(), 2);
    fs::write(&p, "id,n,v\na,1.5,2.5\n").unwrap();
    assert!(matches!(check_csv_schema(&p, &schema), Err(Error::Data { .. })));
    fs::write(&p, "id,v,n\na,1,2\n").unwrap();
    assert!(matches!(check_csv_schema(&p, &schema), Err(Error::Data { .. })));
    fs::write(&p, "id,n,v\na,1,x\n").unwrap();
    assert!(matches!(check_csv_schema(&p, &schema), Err(Error::Data { .. })));
}

#[test]
fn png_codec_round_trips_and_rejects_garbage() {
    let tile = TileImage::from_interleaved_u8(
        2,
        3,
        maplur_core::scene::ChannelSemantics::Map,
        &(0..18).map(|i| (i * 14) as u8).collect::<Vec<_>>(),
    )
    .unwrap();
    let bytes = io::tile_png(&tile).unwrap();
    let back = io::decode_png(&bytes, tile.semantics(), Path::new("mem")).unwrap();
    assert_eq!(back, tile);
    let err = io::decode_png(b"not a png", tile.semantics(), Path::new("mem")).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_DATA);
}
