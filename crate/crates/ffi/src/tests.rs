use super::*;

use std::ffi::CString;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mnli_last_error()) }.to_string_lossy().into_owned()
}

fn cli(args: &[&str]) -> c_int {
    let owned: Vec<CString> = std::iter::once("mednli").chain(args.iter().copied()).map(c).collect();
    let ptrs: Vec<*const c_char> = owned.iter().map(|s| s.as_ptr()).collect();
    unsafe { mnli_cli_run(ptrs.len() as c_int, ptrs.as_ptr()) }
}

#[test]
fn version_and_labels() {
    let v = unsafe { CStr::from_ptr(mnli_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    let names: Vec<String> = (0..3)
        .map(|i| unsafe { CStr::from_ptr(mnli_label_name(i)) }.to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["entailment", "contradiction", "neutral"]);
    assert!(mnli_label_name(3).is_null());
}

#[test]
fn demo_graph_distances() {
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(mnli_graph_demo(&mut g), MnliStatus::Ok);
        assert!(mnli_graph_len(g) > 0);
        let mut d = -2i64;
        assert_eq!(mnli_graph_distance(g, c("C020").as_ptr(), c("C020").as_ptr(), &mut d), MnliStatus::Ok);
        assert_eq!(d, 0);
        assert_eq!(mnli_graph_distance(g, c("C020").as_ptr(), c("C021").as_ptr(), &mut d), MnliStatus::Ok);
        let expected = shortest_path_len(&ConceptGraph::demo(), "C020", "C021").unwrap().map_or(-1, |d| d as i64);
        assert_eq!(d, expected);
        assert_eq!(mnli_graph_distance(g, c("C020").as_ptr(), c("NOPE").as_ptr(), &mut d), MnliStatus::UnknownConcept);
        assert!(last_error().contains("NOPE"));
        mnli_graph_free(g);
    }
}

#[test]
fn null_and_bad_inputs_are_reported() {
    unsafe {
        let mut d = 0i64;
        assert_eq!(mnli_graph_distance(ptr::null(), c("a").as_ptr(), c("b").as_ptr(), &mut d), MnliStatus::NullPointer);
        assert!(last_error().contains("graph"));
        assert_eq!(mnli_graph_demo(ptr::null_mut()), MnliStatus::NullPointer);
        let mut g = ptr::null_mut();
        assert_eq!(mnli_graph_open(c("/no/such/ontology.json").as_ptr(), &mut g), MnliStatus::Io);
        assert!(g.is_null());
        let bad = [0xffu8, 0];
        assert_eq!(mnli_graph_open(bad.as_ptr().cast(), &mut g), MnliStatus::InvalidUtf8);
        let mut m = ptr::null_mut();
        assert_eq!(mnli_model_open(c("/no/such/run").as_ptr(), ptr::null(), &mut m), MnliStatus::Io);
        mnli_model_free(ptr::null_mut());
        mnli_graph_free(ptr::null_mut());
    }
}

#[test]
fn kappa_through_the_boundary() {
    let mut k = 0.0;
    let perfect = [5u64, 0, 0, 0, 7, 0, 0, 0, 4];
    unsafe {
        assert_eq!(mnli_kappa(perfect.as_ptr(), 3, &mut k), MnliStatus::Ok);
        assert!((k - 1.0).abs() < 1e-12);
        let table = [20u64, 5, 10, 15];
        assert_eq!(mnli_kappa(table.as_ptr(), 2, &mut k), MnliStatus::Ok);
        let expected = kappa_from_confusion(&[vec![20, 5], vec![10, 15]]).unwrap();
        assert_eq!(k, expected);
        assert_eq!(mnli_kappa(ptr::null(), 2, &mut k), MnliStatus::NullPointer);
    }
}

#[test]
fn cli_train_then_predict_via_handles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = cli(&[
        "train",
        "--out",
        out,
        "--set",
        "model.architecture=bow",
        "--set",
        "model.embedding_dim=8",
        "--set",
        "model.mlp=[8]",
        "--set",
        "model.trainable_embeddings=true",
        "--set",
        "seeds=[1]",
        "--set",
        "max_epochs=2",
        "--set",
        "name=ffi",
    ]);
    assert_eq!(code, 0);
    let run = dir.path().join("ffi/1");

    let (mut tensors, mut values) = (0usize, 0usize);
    let ckpt = c(run.join(CHECKPOINT_FILE).to_str().unwrap());
    unsafe {
        assert_eq!(mnli_checkpoint_inspect(ckpt.as_ptr(), &mut tensors, &mut values), MnliStatus::Ok);
    }
    let store = checkpoint::load(&run.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!((tensors, values), (store.len(), store.num_values()));

    let mut m = ptr::null_mut();
    let run_c = c(run.to_str().unwrap());
    unsafe {
        assert_eq!(mnli_model_open(run_c.as_ptr(), ptr::null(), &mut m), MnliStatus::Ok, "{}", last_error());
        let mut probs = [0.0f64; 3];
        let mut label = 9usize;
        let status = mnli_model_predict(
            m,
            c("patient has pneumonia").as_ptr(),
            c("patient is sick").as_ptr(),
            probs.as_mut_ptr(),
            &mut label,
        );
        assert_eq!(status, MnliStatus::Ok, "{}", last_error());
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(label < 3);
        let argmax = (0..3).max_by(|&a, &b| probs[a].total_cmp(&probs[b])).unwrap();
        assert_eq!(label, argmax);
        assert_eq!(
            mnli_model_predict(m, c("").as_ptr(), c("x").as_ptr(), probs.as_mut_ptr(), ptr::null_mut()),
            MnliStatus::InvalidArgument
        );
        assert_eq!(mnli_model_set_head(m, c("no-such-head").as_ptr()), MnliStatus::InvalidArgument);
        assert_eq!(mnli_model_set_head(m, c(DEFAULT_HEAD).as_ptr()), MnliStatus::Ok);
        mnli_model_free(m);
    }
}

#[test]
fn cli_usage_errors_map_to_exit_codes() {
    assert_eq!(cli(&["no-such-command"]), mednli::cli::EXIT_CONFIG);
    assert_eq!(unsafe { mnli_cli_run(1, ptr::null()) }, mednli::cli::EXIT_CONFIG);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mednli.h")).unwrap();
    let source = include_str!("lib.rs");
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for opaque in ["MnliModel", "MnliGraph", "MNLI_STATUS_OK", "MNLI_STATUS_PANIC"] {
        assert!(header.contains(opaque), "{opaque}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let main = dir.path().join("main.c");
    std::fs::write(
        &main,
        "#include \"mednli.h\"\nint main(void) { MnliGraph *g = 0; MnliStatus s = mnli_graph_demo(&g); (void)s; return 0; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&main)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| std::process::Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
