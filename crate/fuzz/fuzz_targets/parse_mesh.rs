#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mesh) = wellbem::mesh::parse_mesh_text(text) {
        // accepted meshes are valid and round-trip bit-stably
        mesh.validate()
            .expect("parser must only accept valid meshes");
        let written = wellbem::mesh::write_mesh_text(&mesh);
        let reparsed = wellbem::mesh::parse_mesh_text(&written).expect("written mesh must parse");
        assert_eq!(written, wellbem::mesh::write_mesh_text(&reparsed));
    }
});
