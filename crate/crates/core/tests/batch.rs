use labelsynth::phantom::phantom_brain;
use labelsynth::pipeline::SampleFiles;
use labelsynth::{generate_batch, generate_sample, GeneratorConfig, LabelSchema, SampleManifest};

fn small_cfg() -> GeneratorConfig {
    GeneratorConfig {
        crop_size: [24, 24, 24],
        seed: 3,
        ..GeneratorConfig::default()
    }
}

#[test]
fn interrupted_batch_resumes_without_rewriting() {
    let maps = vec![phantom_brain([32; 3])];
    let cfg = small_cfg();
    let schema = LabelSchema::default_brain();
    let dir = tempfile::tempdir().unwrap();

    let first = generate_batch(&maps, &cfg, &schema, 3, dir.path(), 1).unwrap();
    assert_eq!(first.generated, vec![0, 1, 2]);

    // Sample 1 loses its manifest, as if the run stopped mid-write.
    let lost = SampleFiles::new(dir.path(), 1);
    let image_before = std::fs::read(&lost.image).unwrap();
    std::fs::remove_file(&lost.manifest).unwrap();
    let second = generate_batch(&maps, &cfg, &schema, 4, dir.path(), 2).unwrap();
    assert_eq!(second.generated, vec![1, 3]);
    assert_eq!(second.skipped, vec![0, 2]);
    assert_eq!(std::fs::read(&lost.image).unwrap(), image_before);

    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with(".partial"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn written_manifest_matches_in_memory_sample() {
    let maps = vec![phantom_brain([32; 3])];
    let cfg = small_cfg();
    let schema = LabelSchema::default_brain();
    let dir = tempfile::tempdir().unwrap();
    generate_batch(&maps, &cfg, &schema, 2, dir.path(), 1).unwrap();
    for i in 0..2 {
        let on_disk = SampleManifest::read(SampleFiles::new(dir.path(), i).manifest).unwrap();
        let pair = generate_sample(&maps, &cfg, &schema, i).unwrap();
        assert_eq!(on_disk, pair.manifest);
        assert_eq!(on_disk.image_digest, pair.image.digest());
        assert_eq!(on_disk.target_digest, pair.target.digest());
    }
}

#[test]
fn failing_samples_are_reported_not_fatal() {
    // A label the schema does not know makes every sample fail.
    let map = phantom_brain([16; 3]).map(|l| if l == 2 { 4242 } else { l });
    let dir = tempfile::tempdir().unwrap();
    let report = generate_batch(&[map], &small_cfg(), &LabelSchema::default_brain(), 2, dir.path(), 1).unwrap();
    assert!(report.generated.is_empty());
    assert_eq!(report.failures.len(), 2);
    assert!(report.failures[0].message.contains("4242"), "{}", report.failures[0].message);
}
