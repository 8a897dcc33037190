use labelsynth::nifti::{read_image, read_labels, read_nifti, write_nifti, AnyVolume, DataType};
use labelsynth::{ImageVolume, LabelVolume};
use nalgebra::Matrix4;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = [usize; 3]> {
    (1usize..6, 1usize..6, 1usize..6).prop_map(|(x, y, z)| [x, y, z])
}

fn spacing() -> impl Strategy<Value = [f64; 3]> {
    // Values exactly representable in the header's float32 fields.
    prop::array::uniform3((1u32..64).prop_map(|k| k as f64 * 0.125))
}

fn label_case(lo: i32, hi: i32) -> impl Strategy<Value = (LabelVolume, bool)> {
    (dims(), spacing(), any::<bool>()).prop_flat_map(move |(d, s, gz)| {
        prop::collection::vec(lo..=hi, d.iter().product::<usize>())
            .prop_map(move |data| (LabelVolume::from_vec(data, d, s).unwrap(), gz))
    })
}

fn path_for(dir: &tempfile::TempDir, gz: bool) -> std::path::PathBuf {
    dir.path().join(if gz { "v.nii.gz" } else { "v.nii" })
}

fn check_labels(v: &LabelVolume, dt: DataType, gz: bool) -> Result<(), TestCaseError> {
    let dir = tempfile::tempdir().unwrap();
    let path = path_for(&dir, gz);
    write_nifti(v, &path, dt, false).unwrap();
    let back = read_labels(&path).unwrap();
    prop_assert_eq!(back.data(), v.data());
    prop_assert_eq!(back.dims(), v.dims());
    prop_assert_eq!(back.spacing(), v.spacing());
    prop_assert!(matches!(read_nifti(&path).unwrap(), AnyVolume::Labels(_)));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uint8_is_bit_exact((v, gz) in label_case(0, 255)) {
        check_labels(&v, DataType::UInt8, gz)?;
    }

    #[test]
    fn int16_is_bit_exact((v, gz) in label_case(i16::MIN as i32, i16::MAX as i32)) {
        check_labels(&v, DataType::Int16, gz)?;
    }

    #[test]
    fn int32_is_bit_exact((v, gz) in label_case(i32::MIN, i32::MAX)) {
        check_labels(&v, DataType::Int32, gz)?;
    }

    #[test]
    fn float32_is_bit_exact(
        d in dims(),
        s in spacing(),
        gz in any::<bool>(),
        seed in prop::collection::vec(any::<u32>(), 125),
        shift in prop::array::uniform3(-100i32..100),
    ) {
        // Arbitrary finite bit patterns, subnormals and signed zeros included.
        let n: usize = d.iter().product();
        let data: Vec<f32> = seed[..n]
            .iter()
            .map(|&b| f32::from_bits(b))
            .map(|x| if x.is_finite() { x } else { -0.0 })
            .collect();
        let mut affine = Matrix4::identity();
        for a in 0..3 {
            affine[(a, a)] = s[a];
            affine[(a, 3)] = shift[a] as f64 * 0.5;
        }
        let v = ImageVolume::new(data, d, s, affine).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = path_for(&dir, gz);
        write_nifti(&v, &path, DataType::Float32, false).unwrap();
        let back = read_image(&path).unwrap();
        let bits = |v: &ImageVolume| v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&v));
        prop_assert_eq!(back.affine(), v.affine());
        prop_assert_eq!(back.spacing(), v.spacing());
    }
}

#[test]
fn compressed_and_plain_decode_identically() {
    let v = LabelVolume::from_fn([7, 5, 3], [1.0, 2.0, 0.5], |x, y, z| (x * 100 + y * 10 + z) as i32 - 300).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("a.nii");
    let gz = dir.path().join("a.nii.gz");
    write_nifti(&v, &plain, DataType::Int16, false).unwrap();
    write_nifti(&v, &gz, DataType::Int16, false).unwrap();
    assert_eq!(read_labels(&plain).unwrap(), read_labels(&gz).unwrap());
    assert_eq!(read_labels(&plain).unwrap(), v);
    let raw = std::fs::read(&gz).unwrap();
    assert_eq!(&raw[..2], &[0x1f, 0x8b]);
}

#[test]
fn out_of_range_labels_are_rejected() {
    let v = LabelVolume::from_vec(vec![0, 256], [2, 1, 1], [1.0; 3]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(write_nifti(&v, dir.path().join("x.nii"), DataType::UInt8, false).is_err());
    assert!(write_nifti(&v, dir.path().join("x.nii"), DataType::Int16, false).is_ok());
}
